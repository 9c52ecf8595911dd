//! Frequency-domain comparison of control signals between driving modes.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::output::fixed_str;
use crate::segmentation::{Mode, Segmentation};
use crate::telemetry::{ActuatorChannel, DriveLog, Timestamp};

/// Minimum data per mode for a comparison, in seconds.
pub const MIN_MODE_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("resample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("sample times must be strictly increasing and values finite")]
    BadSamples,
    #[error("not enough {} data on this channel (need {MIN_MODE_SECONDS} s)", .mode.name())]
    InsufficientModeData { mode: Mode },
    #[error("unknown channel `{0}` (expected speed, acceleration, brake or steering)")]
    UnknownChannel(String),
    #[error("engagement channel is empty")]
    EmptyChannel,
}

/// Values on a uniform time grid starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    pub t0: Timestamp,
    pub rate: f64,
    pub values: Vec<f64>,
}

/// Linear interpolation of `(t, value)` samples onto `t0 + k / rate`,
/// covering `[first.t, last.t]` without extrapolating.
pub fn resample_uniform(samples: &[(Timestamp, f64)], rate: f64) -> Result<UniformSeries, SpectrumError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SpectrumError::InvalidRate(rate));
    }
    if samples.len() < 2 {
        return Err(SpectrumError::TooFewSamples { needed: 2, got: samples.len() });
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) || samples.iter().any(|s| !s.1.is_finite()) {
        return Err(SpectrumError::BadSamples);
    }
    let t0 = samples[0].0;
    let span = samples[samples.len() - 1].0 - t0;
    let n = (span * rate + 1e-9).floor() as usize + 1;
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 / rate;
        while j + 2 < samples.len() && samples[j + 1].0 <= t {
            j += 1;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let f = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        values.push(a.1 + f * (b.1 - a.1));
    }
    Ok(UniformSeries { t0, rate, values })
}

/// Taper applied before the transform.
pub trait Window: Send + Sync {
    fn name(&self) -> &'static str;

    fn coefficients(&self, n: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rect;

impl Window for Rect {
    fn name(&self) -> &'static str {
        "rect"
    }

    fn coefficients(&self, n: usize) -> Vec<f64> {
        vec![1.0; n]
    }
}

/// Symmetric Hann window.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hann;

impl Window for Hann {
    fn name(&self) -> &'static str {
        "hann"
    }

    fn coefficients(&self, n: usize) -> Vec<f64> {
        if n < 2 {
            return vec![1.0; n];
        }
        let m = (n - 1) as f64;
        (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / m).cos()).collect()
    }
}

/// One-sided DFT magnitudes, bins `0..=n/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Hz per bin.
    pub resolution: f64,
    pub magnitudes: Vec<f64>,
    /// Transform length.
    pub n: usize,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    pub fn peak_bin(&self) -> usize {
        self.magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    }

    /// Weight of `bin` in the one-sided Parseval sum.
    fn bin_weight(&self, bin: usize) -> f64 {
        if bin == 0 || (self.n % 2 == 0 && bin == self.n / 2) {
            1.0
        } else {
            2.0
        }
    }

    /// Energy of bin `bin`, scaled so the bins sum to the time-domain energy.
    pub fn bin_energy(&self, bin: usize) -> f64 {
        self.bin_weight(bin) * self.magnitudes[bin].powi(2) / self.n as f64
    }

    pub fn energy(&self) -> f64 {
        (0..self.magnitudes.len()).map(|k| self.bin_energy(k)).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,magnitude\n");
        for (k, m) in self.magnitudes.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fixed_str(self.frequency(k)), fixed_str(*m));
        }
        out
    }
}

/// Mean-removed, windowed series as fed to the transform.
pub fn prepare(series: &UniformSeries, window: &dyn Window) -> Vec<f64> {
    let n = series.values.len();
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let w = window.coefficients(n);
    series.values.iter().zip(w).map(|(v, w)| (v - mean) * w).collect()
}

fn transform(prepared: &[f64], n_fft: usize, rate: f64) -> Spectrum {
    let mut buf: Vec<Complex<f64>> = prepared.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Spectrum {
        resolution: rate / n_fft as f64,
        magnitudes: buf[..=n_fft / 2].iter().map(|c| c.norm()).collect(),
        n: n_fft,
    }
}

/// Magnitude spectrum of the mean-removed, windowed series.
pub fn spectrum(series: &UniformSeries, window: &dyn Window) -> Result<Spectrum, SpectrumError> {
    let n = series.values.len();
    if n < 4 {
        return Err(SpectrumError::TooFewSamples { needed: 4, got: n });
    }
    Ok(transform(&prepare(series, window), n, series.rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalChannel {
    Speed,
    Acceleration,
    Brake,
    Steering,
}

impl SignalChannel {
    pub fn from_name(name: &str) -> Result<SignalChannel, SpectrumError> {
        match name {
            "speed" => Ok(SignalChannel::Speed),
            "acceleration" | "accel" => Ok(SignalChannel::Acceleration),
            "brake" => Ok(SignalChannel::Brake),
            "steering" => Ok(SignalChannel::Steering),
            other => Err(SpectrumError::UnknownChannel(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalChannel::Speed => "speed",
            SignalChannel::Acceleration => "acceleration",
            SignalChannel::Brake => "brake",
            SignalChannel::Steering => "steering",
        }
    }

    pub fn samples(self, log: &DriveLog) -> Vec<(Timestamp, f64)> {
        let actuator = |c: ActuatorChannel| log.actuator(c).map(|s| (s.t, s.value)).collect();
        match self {
            SignalChannel::Speed => log.measured_speeds().map(|s| (s.t, s.v)).collect(),
            SignalChannel::Acceleration => actuator(ActuatorChannel::Acceleration),
            SignalChannel::Brake => actuator(ActuatorChannel::Brake),
            SignalChannel::Steering => actuator(ActuatorChannel::Steering),
        }
    }
}

/// Duration-weighted average spectra of each mode.
///
/// Every segment is resampled on its own and zero-padded to the longest
/// segment series of either mode, so both spectra share one bin grid.
/// Segments with fewer than four resampled points are skipped.
pub fn compare_modes(
    log: &DriveLog,
    segmentation: &Segmentation,
    channel: SignalChannel,
    rate: f64,
    window: &dyn Window,
) -> Result<(Spectrum, Spectrum), SpectrumError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SpectrumError::InvalidRate(rate));
    }
    let samples = channel.samples(log);
    let mut pieces: Vec<(Mode, f64, Vec<f64>)> = Vec::new();
    for seg in &segmentation.segments {
        let lo = samples.partition_point(|s| s.0 < seg.t_start);
        let hi = samples.partition_point(|s| s.0 <= seg.t_end);
        let Ok(series) = resample_uniform(&samples[lo..hi], rate) else { continue };
        if series.values.len() < 4 {
            continue;
        }
        pieces.push((seg.mode, seg.uptime, prepare(&series, window)));
    }
    for mode in [Mode::Autonomous, Mode::Manual] {
        let covered: f64 = pieces.iter().filter(|p| p.0 == mode).map(|p| p.1).sum();
        if covered < MIN_MODE_SECONDS {
            return Err(SpectrumError::InsufficientModeData { mode });
        }
    }
    let n_fft = pieces.iter().map(|p| p.2.len()).max().expect("both modes have data");
    let average = |mode: Mode| {
        let mut acc = vec![0.0; n_fft / 2 + 1];
        let mut weight = 0.0;
        for (_, w, prepared) in pieces.iter().filter(|p| p.0 == mode) {
            let s = transform(prepared, n_fft, rate);
            acc.iter_mut().zip(&s.magnitudes).for_each(|(a, m)| *a += w * m);
            weight += w;
        }
        acc.iter_mut().for_each(|a| *a /= weight);
        Spectrum { resolution: rate / n_fft as f64, magnitudes: acc, n: n_fft }
    };
    Ok((average(Mode::Autonomous), average(Mode::Manual)))
}

/// Elapsed time between the first and last engagement samples.
pub fn trip_uptime(log: &DriveLog) -> Result<f64, SpectrumError> {
    match (log.engagement.first(), log.engagement.last()) {
        (Some(a), Some(b)) => Ok(b.t - a.t),
        _ => Err(SpectrumError::EmptyChannel),
    }
}
