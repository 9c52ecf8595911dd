#![allow(dead_code)]

use avbench_core::synth::{synth_log, GroundTruth, Intervention, SynthScenario};
use avbench_core::telemetry::DriveLog;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random valid scenario: 2 to 5 legs, noise-free, 5 to 50 Hz, up to three
/// interventions. Invalid draws (overlapping windows) are redrawn.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> (SynthScenario, DriveLog, GroundTruth) {
    loop {
        let legs = rng.gen_range(1..=4);
        let mut waypoints = vec![[rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)]];
        for _ in 0..legs {
            let [x, y] = *waypoints.last().unwrap();
            let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = rng.gen_range(20.0..120.0);
            waypoints.push([x + len * heading.cos(), y + len * heading.sin()]);
        }
        let speeds: Vec<f64> = (0..legs).map(|_| rng.gen_range(1.0..6.0)).collect();
        let total: f64 = waypoints.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
        let n_iv = rng.gen_range(0..=3);
        let mut starts: Vec<f64> = (0..n_iv).map(|_| rng.gen_range(0.05 * total..0.9 * total)).collect();
        starts.sort_by(f64::total_cmp);
        let sc = SynthScenario {
            waypoints,
            speeds,
            sample_rate: rng.gen_range(5.0..=50.0),
            interventions: starts
                .into_iter()
                .map(|s| Intervention { start_distance: s, duration: rng.gen_range(1.0..8.0) })
                .collect(),
            seed: rng.gen(),
            noise_std: 0.0,
            start_time: 0.0,
        };
        if let Ok((log, truth)) = synth_log(&sc) {
            return (sc, log, truth);
        }
    }
}

/// Largest distance travelled in one sample period.
pub fn max_chord(sc: &SynthScenario) -> f64 {
    sc.speeds.iter().copied().fold(0.0, f64::max) / sc.sample_rate
}
