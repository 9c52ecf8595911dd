//! Deterministic synthetic drive logs with analytically known totals.
//!
//! The vehicle follows a waypoint polyline at a constant speed per leg and
//! keeps moving through interventions. Intervention boundaries snap to the
//! nearest sample instant, and the ground truth uses the snapped instants,
//! so segmentation of the generated log reproduces it exactly.

use std::io::{BufRead, BufReader, Read};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use thiserror::Error;

use crate::metrics::{compute_metrics, ModeTotals};
use crate::output::fixed;
use crate::segmentation::{Mode, Segment};
use crate::telemetry::{nearest_index, DriveLog, EngagementSample, Pose, SpeedSample, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },
    #[error("line {line_no}: {reason}")]
    Parse { line_no: usize, reason: String },
}

fn invalid<T>(reason: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidScenario { reason: reason.into() })
}

/// An intervention starting `start_distance` meters along the path and
/// lasting `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intervention {
    pub start_distance: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub waypoints: Vec<[f64; 2]>,
    /// One speed for every leg, or one per leg (m/s).
    pub speeds: Vec<f64>,
    pub sample_rate: f64,
    pub interventions: Vec<Intervention>,
    pub seed: u64,
    /// Standard deviation of the x/y pose jitter in meters.
    pub noise_std: f64,
    /// Unix time of the first sample.
    pub start_time: Timestamp,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            waypoints: Vec::new(),
            speeds: Vec::new(),
            sample_rate: 10.0,
            interventions: Vec::new(),
            seed: 0,
            noise_std: 0.0,
            start_time: 0.0,
        }
    }
}

impl SynthScenario {
    /// Straight path from the origin along +x.
    pub fn straight(length: f64, speed: f64, sample_rate: f64) -> Self {
        SynthScenario {
            waypoints: vec![[0.0, 0.0], [length, 0.0]],
            speeds: vec![speed],
            sample_rate,
            ..Default::default()
        }
    }

    pub fn with_intervention(mut self, start_distance: f64, duration: f64) -> Self {
        self.interventions.push(Intervention { start_distance, duration });
        self
    }

    /// Parses the line format: `waypoint,x,y`, `speed,v`, `rate,hz`,
    /// `intervene,start_m,duration_s`, `seed,n`, `noise,std`, `start,t0`.
    pub fn parse<R: Read>(reader: R) -> Result<SynthScenario, SynthError> {
        let mut sc = SynthScenario::default();
        let mut rate_seen = false;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| SynthError::Parse { line_no, reason };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let nums = |n: usize| -> Result<Vec<f64>, SynthError> {
                if fields.len() != n + 1 {
                    return Err(err(format!("`{}` expects {n} value(s)", fields[0])));
                }
                fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| err(format!("`{f}` is not a number"))))
                    .collect()
            };
            match fields[0] {
                "waypoint" => {
                    let v = nums(2)?;
                    sc.waypoints.push([v[0], v[1]]);
                }
                "speed" => sc.speeds.push(nums(1)?[0]),
                "rate" => {
                    sc.sample_rate = nums(1)?[0];
                    rate_seen = true;
                }
                "intervene" => {
                    let v = nums(2)?;
                    sc.interventions.push(Intervention { start_distance: v[0], duration: v[1] });
                }
                "seed" => {
                    if fields.len() != 2 {
                        return Err(err("`seed` expects 1 value".into()));
                    }
                    sc.seed = fields[1].parse().map_err(|_| err(format!("`{}` is not an integer", fields[1])))?;
                }
                "noise" => sc.noise_std = nums(1)?[0],
                "start" => sc.start_time = nums(1)?[0],
                other => return Err(err(format!("unknown scenario key `{other}`"))),
            }
        }
        if !rate_seen {
            return Err(SynthError::InvalidScenario { reason: "missing `rate`".into() });
        }
        Ok(sc)
    }

    pub fn parse_str(text: &str) -> Result<SynthScenario, SynthError> {
        SynthScenario::parse(text.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub segments: Vec<Segment>,
    pub auto_distance: f64,
    pub manual_distance: f64,
    pub auto_uptime: f64,
    pub manual_uptime: f64,
    pub n_interventions: usize,
}

impl GroundTruth {
    pub fn totals(&self) -> ModeTotals {
        ModeTotals {
            auto_distance: self.auto_distance,
            manual_distance: self.manual_distance,
            auto_uptime: self.auto_uptime,
            manual_uptime: self.manual_uptime,
            n_interventions: self.n_interventions,
        }
    }

    pub fn to_json(&self, group_key: &str) -> Value {
        let segments: Vec<Value> = self
            .segments
            .iter()
            .map(|s| {
                json!({
                    "mode": s.mode.name(),
                    "t_start": fixed(s.t_start),
                    "t_end": fixed(s.t_end),
                    "distance": fixed(s.distance),
                    "uptime": fixed(s.uptime),
                })
            })
            .collect();
        json!({
            "segments": segments,
            "totals": self.totals().to_json(),
            "metrics": compute_metrics(self.totals(), group_key).to_json(),
        })
    }
}

/// Arc-length parametrised polyline traversed at per-leg speeds.
struct Route {
    waypoints: Vec<[f64; 2]>,
    /// Cumulative distance at the start of each leg, plus the total.
    cum_dist: Vec<f64>,
    /// Cumulative time at the start of each leg, plus the total.
    cum_time: Vec<f64>,
    speeds: Vec<f64>,
}

impl Route {
    fn new(sc: &SynthScenario) -> Result<Route, SynthError> {
        let legs = sc.waypoints.len().saturating_sub(1);
        if legs == 0 {
            return invalid("at least two waypoints are required");
        }
        if sc.waypoints.iter().flatten().any(|c| !c.is_finite()) {
            return invalid("waypoints must be finite");
        }
        let speeds = match sc.speeds.len() {
            1 => vec![sc.speeds[0]; legs],
            n if n == legs => sc.speeds.clone(),
            n => return invalid(format!("{n} speeds given for {legs} legs")),
        };
        if speeds.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return invalid("speeds must be positive");
        }
        let mut cum_dist = vec![0.0];
        let mut cum_time = vec![0.0];
        for (i, w) in sc.waypoints.windows(2).enumerate() {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if !(len > 0.0) {
                return invalid(format!("leg {i} has zero length"));
            }
            cum_dist.push(cum_dist[i] + len);
            cum_time.push(cum_time[i] + len / speeds[i]);
        }
        Ok(Route { waypoints: sc.waypoints.clone(), cum_dist, cum_time, speeds })
    }

    fn length(&self) -> f64 {
        *self.cum_dist.last().unwrap()
    }

    fn duration(&self) -> f64 {
        *self.cum_time.last().unwrap()
    }

    fn legs(&self) -> usize {
        self.speeds.len()
    }

    /// Leg in motion at time `tau`; `left` picks the leg ending at a waypoint
    /// instant rather than the one starting there.
    fn leg_at_time(&self, tau: f64, left: bool) -> usize {
        let i = if left {
            self.cum_time.partition_point(|&c| c < tau)
        } else {
            self.cum_time.partition_point(|&c| c <= tau)
        };
        i.saturating_sub(1).min(self.legs() - 1)
    }

    fn distance_at(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, self.duration());
        let i = self.leg_at_time(tau, false);
        (self.cum_dist[i] + (tau - self.cum_time[i]) * self.speeds[i]).min(self.length())
    }

    fn time_at_distance(&self, s: f64) -> f64 {
        let i = self.cum_dist.partition_point(|&c| c <= s).saturating_sub(1).min(self.legs() - 1);
        self.cum_time[i] + (s - self.cum_dist[i]) / self.speeds[i]
    }

    fn position(&self, tau: f64) -> ([f64; 2], f64) {
        let tau = tau.clamp(0.0, self.duration());
        let i = self.leg_at_time(tau, false);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let leg_len = self.cum_dist[i + 1] - self.cum_dist[i];
        let f = ((tau - self.cum_time[i]) * self.speeds[i] / leg_len).clamp(0.0, 1.0);
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        ([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])], heading)
    }
}

/// Generates the log and its ground truth.
pub fn synth_log(sc: &SynthScenario) -> Result<(DriveLog, GroundTruth), SynthError> {
    if !(sc.sample_rate > 0.0) || !sc.sample_rate.is_finite() {
        return invalid("sample rate must be positive");
    }
    if !(sc.noise_std >= 0.0) || !sc.noise_std.is_finite() {
        return invalid("noise must be non-negative");
    }
    if !(sc.start_time >= 0.0) || !sc.start_time.is_finite() {
        return invalid("start time must be a non-negative Unix time");
    }
    let route = Route::new(sc)?;
    let total = route.duration();

    // Relative sample instants on the rate grid, plus every waypoint instant so
    // the sampled polyline is the route itself; the last one ends the path.
    let k_last = (total * sc.sample_rate + 1e-9).floor() as usize;
    let mut taus: Vec<f64> = (0..=k_last).map(|k| k as f64 / sc.sample_rate).collect();
    taus.extend(route.cum_time[1..].iter().copied().filter(|&c| {
        let k = (c * sc.sample_rate).round();
        (c - k / sc.sample_rate).abs() > 1e-9
    }));
    taus.sort_by(f64::total_cmp);
    let last = taus.len() - 1;
    if last == 0 {
        return invalid("path is shorter than one sample period");
    }

    // Snapped intervention windows as sample index ranges [start, end).
    let mut windows: Vec<(usize, usize)> = Vec::with_capacity(sc.interventions.len());
    for (i, iv) in sc.interventions.iter().enumerate() {
        if !(iv.start_distance > 0.0 && iv.start_distance < route.length()) {
            return invalid(format!("intervention {i} starts outside the path"));
        }
        if !(iv.duration > 0.0) || !iv.duration.is_finite() {
            return invalid(format!("intervention {i} has non-positive duration"));
        }
        let t0 = route.time_at_distance(iv.start_distance);
        let s = nearest_index(&taus, t0, |&t| t).unwrap();
        let e = nearest_index(&taus, t0 + iv.duration, |&t| t).unwrap();
        if s == 0 {
            return invalid(format!("intervention {i} snaps to the first sample"));
        }
        if e <= s {
            return invalid(format!("intervention {i} is shorter than half a sample period"));
        }
        if let Some(&(_, prev_end)) = windows.last() {
            if s <= prev_end {
                return invalid(format!("intervention {i} overlaps or touches the previous one"));
            }
        }
        windows.push((s, e));
    }

    let abs = |tau: f64| sc.start_time + tau;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let noise = (sc.noise_std > 0.0).then(|| Normal::new(0.0, sc.noise_std).expect("valid std"));

    let mut log = DriveLog { log_id: Some(format!("synth-{}", sc.seed)), ..Default::default() };
    for (k, &tau) in taus.iter().enumerate() {
        let t = abs(tau);
        let ([mut x, mut y], heading) = route.position(tau);
        if let Some(n) = &noise {
            x += n.sample(&mut rng);
            y += n.sample(&mut rng);
        }
        let half = heading / 2.0;
        log.poses.push(Pose { t, x, y, z: 0.0, q0: half.cos(), q1: 0.0, q2: 0.0, q3: half.sin() });

        let v = route.speeds[route.leg_at_time(tau, true)];
        log.speeds.push(SpeedSample::measured(t, v));
        log.speeds.push(SpeedSample::target(t, v));

        let manual = windows.iter().any(|&(s, e)| s <= k && k < e);
        log.engagement.push(EngagementSample::new(t, !manual));
    }

    // Ground truth from the route geometry at the snapped instants.
    let mut boundaries = vec![(0usize, Mode::Autonomous)];
    for &(s, e) in &windows {
        boundaries.push((s, Mode::Manual));
        if e < last {
            boundaries.push((e, Mode::Autonomous));
        }
    }
    let mut segments = Vec::with_capacity(boundaries.len());
    for (i, &(start, mode)) in boundaries.iter().enumerate() {
        let end = boundaries.get(i + 1).map_or(last, |b| b.0);
        let mut seg = Segment::new(mode, abs(taus[start]), abs(taus[end]));
        seg.distance = route.distance_at(taus[end]) - route.distance_at(taus[start]);
        segments.push(seg);
    }
    let mut truth = GroundTruth {
        segments,
        auto_distance: 0.0,
        manual_distance: 0.0,
        auto_uptime: 0.0,
        manual_uptime: 0.0,
        n_interventions: windows.len(),
    };
    for seg in &truth.segments {
        match seg.mode {
            Mode::Autonomous => {
                truth.auto_distance += seg.distance;
                truth.auto_uptime += seg.uptime;
            }
            Mode::Manual => {
                truth.manual_distance += seg.distance;
                truth.manual_uptime += seg.uptime;
            }
        }
    }
    Ok((log, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::serialize_log;
    use crate::telemetry::validate_log;
    use approx::assert_relative_eq;

    #[test]
    fn straight_line_no_interventions() {
        let (log, gt) = synth_log(&SynthScenario::straight(100.0, 2.0, 10.0)).unwrap();
        assert!(validate_log(&log).is_empty());
        assert_eq!(log.poses.len(), 501);
        assert_relative_eq!(gt.auto_distance, 100.0);
        assert_relative_eq!(gt.auto_uptime, 50.0);
        assert_eq!(gt.n_interventions, 0);
        assert_eq!(gt.segments.len(), 1);
    }

    #[test]
    fn two_interventions() {
        let sc = SynthScenario::straight(100.0, 2.0, 10.0).with_intervention(30.0, 5.0).with_intervention(60.0, 5.0);
        let (log, gt) = synth_log(&sc).unwrap();
        assert!(validate_log(&log).is_empty());
        assert_eq!(gt.n_interventions, 2);
        assert_relative_eq!(gt.manual_uptime, 10.0, epsilon = 1e-9);
        assert_relative_eq!(gt.manual_distance, 20.0, epsilon = 1e-9);
        assert_relative_eq!(gt.auto_distance, 80.0, epsilon = 1e-9);
        assert_relative_eq!(gt.auto_uptime, 40.0, epsilon = 1e-9);
        let modes: Vec<Mode> = gt.segments.iter().map(|s| s.mode).collect();
        assert_eq!(modes, [Mode::Autonomous, Mode::Manual, Mode::Autonomous, Mode::Manual, Mode::Autonomous]);
        assert_eq!(gt.segments[1].t_start, 15.0);
        assert_eq!(gt.segments[1].t_end, 20.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut sc = SynthScenario::straight(50.0, 1.5, 20.0).with_intervention(10.0, 3.0);
        sc.seed = 7;
        sc.noise_std = 0.05;
        let a = serialize_log(&synth_log(&sc).unwrap().0).unwrap();
        let b = serialize_log(&synth_log(&sc).unwrap().0).unwrap();
        assert_eq!(a, b);
        sc.seed = 8;
        assert_ne!(a, serialize_log(&synth_log(&sc).unwrap().0).unwrap());
    }

    #[test]
    fn off_grid_end_gets_a_final_sample() {
        let (log, gt) = synth_log(&SynthScenario::straight(10.0, 3.0, 10.0)).unwrap();
        let last = log.poses.last().unwrap();
        assert_relative_eq!(last.x, 10.0, epsilon = 1e-12);
        assert_relative_eq!(last.t, 10.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(gt.auto_uptime, 10.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn multi_leg_speeds() {
        let sc = SynthScenario {
            waypoints: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 20.0]],
            speeds: vec![1.0, 4.0],
            sample_rate: 10.0,
            ..Default::default()
        };
        let (log, gt) = synth_log(&sc).unwrap();
        assert_relative_eq!(gt.auto_uptime, 15.0, epsilon = 1e-9);
        assert_relative_eq!(gt.auto_distance, 30.0, epsilon = 1e-9);
        // heading of the second leg is +y
        let q = log.poses.last().unwrap();
        assert_relative_eq!(q.q3, (std::f64::consts::FRAC_PI_4).sin(), epsilon = 1e-12);
    }

    #[test]
    fn invalid_scenarios() {
        let bad = |sc: SynthScenario| matches!(synth_log(&sc), Err(SynthError::InvalidScenario { .. }));
        assert!(bad(SynthScenario::straight(100.0, 0.0, 10.0)));
        assert!(bad(SynthScenario::straight(100.0, 2.0, 0.0)));
        assert!(bad(SynthScenario::straight(100.0, 2.0, 10.0).with_intervention(150.0, 1.0)));
        assert!(bad(SynthScenario::straight(100.0, 2.0, 10.0).with_intervention(30.0, 5.0).with_intervention(35.0, 5.0)));
        assert!(bad(SynthScenario { waypoints: vec![[0.0, 0.0]], speeds: vec![1.0], ..Default::default() }));
        assert!(bad(SynthScenario { waypoints: vec![[0.0, 0.0], [0.0, 0.0]], speeds: vec![1.0], ..Default::default() }));
    }

    #[test]
    fn scenario_file() {
        let text = "# demo\nwaypoint,0,0\nwaypoint,100,0\nspeed,2\nrate,10\nintervene,30,5\nintervene,60,5\nseed,7\nnoise,0\n";
        let sc = SynthScenario::parse_str(text).unwrap();
        assert_eq!(sc, SynthScenario { seed: 7, ..SynthScenario::straight(100.0, 2.0, 10.0).with_intervention(30.0, 5.0).with_intervention(60.0, 5.0) });
        assert!(matches!(SynthScenario::parse_str("rate,10\nwarp,9\n"), Err(SynthError::Parse { line_no: 2, .. })));
        assert!(matches!(SynthScenario::parse_str("waypoint,0,0\n"), Err(SynthError::InvalidScenario { .. })));
    }
}
