//! Distances, per-mode totals and the mean-distance / mean-time between
//! interventions family of ratios.
//!
//! Totals are always summed before a ratio is taken. With no interventions
//! the overall and autonomous ratios are unbounded and reported as a
//! distinguished `no_interventions` state; the manual ratios are zero.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::output::{fixed, fixed_opt};
use crate::segmentation::{Mode, Segment, Segmentation};
use crate::telemetry::{nearest_index, DriveLog, Pose, SpeedSample, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no poses in [{t_i}, {t_k}]")]
    NoPosesInRange { t_i: Timestamp, t_k: Timestamp },
    #[error("no measured speed samples in [{t_i}, {t_k}]")]
    NoSpeedInRange { t_i: Timestamp, t_k: Timestamp },
    #[error("empty interval [{t_i}, {t_k}]")]
    InvalidInterval { t_i: Timestamp, t_k: Timestamp },
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<MetricsError>,
    },
    #[error("log has no poses")]
    NoPoses,
    #[error("no group for log `{log}`: {reason}")]
    UnknownGroupKey { log: String, reason: String },
}

/// Euclidean 3-D path length over consecutive poses stamped inside `[t_i, t_k]`.
pub fn path_distance(poses: &[Pose], t_i: Timestamp, t_k: Timestamp) -> Result<f64, MetricsError> {
    if !(t_i < t_k) {
        return Err(MetricsError::InvalidInterval { t_i, t_k });
    }
    let lo = poses.partition_point(|p| p.t < t_i);
    let hi = poses.partition_point(|p| p.t <= t_k);
    if lo == hi {
        return Err(MetricsError::NoPosesInRange { t_i, t_k });
    }
    Ok(poses[lo..hi].windows(2).map(|w| w[0].distance_to(&w[1])).sum())
}

/// Right Riemann sum `Σ v_τ (t_τ − t_{τ−1})` over measured speed samples
/// stamped inside `[t_i, t_k]`; the first sample in range contributes only
/// its timestamp.
pub fn speed_distance<'a>(
    speeds: impl IntoIterator<Item = &'a SpeedSample>,
    t_i: Timestamp,
    t_k: Timestamp,
) -> Result<f64, MetricsError> {
    if !(t_i < t_k) {
        return Err(MetricsError::InvalidInterval { t_i, t_k });
    }
    let mut prev: Option<Timestamp> = None;
    let mut total = 0.0;
    for s in speeds.into_iter().filter(|s| s.kind == crate::telemetry::SpeedKind::Measured) {
        if s.t < t_i || s.t > t_k {
            continue;
        }
        if let Some(p) = prev {
            total += s.v * (s.t - p);
        }
        prev = Some(s.t);
    }
    match prev {
        Some(_) => Ok(total),
        None => Err(MetricsError::NoSpeedInRange { t_i, t_k }),
    }
}

/// An increment of travelled distance covering the interval that starts at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePiece {
    pub t: Timestamp,
    pub length: f64,
}

/// A way of measuring distance travelled from a drive log.
pub trait DistanceMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Distance over `[t_i, t_k]`.
    fn interval_distance(&self, log: &DriveLog, t_i: Timestamp, t_k: Timestamp) -> Result<f64, MetricsError>;

    /// Consecutive increments of distance. Each piece is credited to the
    /// segment containing its start time.
    fn pieces(&self, log: &DriveLog) -> Vec<DistancePiece>;

    /// Timestamps of the samples the method reads.
    fn sample_times(&self, log: &DriveLog) -> Vec<Timestamp>;

    fn missing_error(&self, t_i: Timestamp, t_k: Timestamp) -> MetricsError;
}

/// Sum of chord lengths between consecutive poses.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathDistance;

impl DistanceMethod for PathDistance {
    fn name(&self) -> &'static str {
        "path"
    }

    fn interval_distance(&self, log: &DriveLog, t_i: Timestamp, t_k: Timestamp) -> Result<f64, MetricsError> {
        path_distance(&log.poses, t_i, t_k)
    }

    fn pieces(&self, log: &DriveLog) -> Vec<DistancePiece> {
        log.poses
            .windows(2)
            .map(|w| DistancePiece { t: w[0].t, length: w[0].distance_to(&w[1]) })
            .collect()
    }

    fn sample_times(&self, log: &DriveLog) -> Vec<Timestamp> {
        log.poses.iter().map(|p| p.t).collect()
    }

    fn missing_error(&self, t_i: Timestamp, t_k: Timestamp) -> MetricsError {
        MetricsError::NoPosesInRange { t_i, t_k }
    }
}

/// Integrated measured speed.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpeedDistance;

impl DistanceMethod for SpeedDistance {
    fn name(&self) -> &'static str {
        "speed"
    }

    fn interval_distance(&self, log: &DriveLog, t_i: Timestamp, t_k: Timestamp) -> Result<f64, MetricsError> {
        speed_distance(&log.speeds, t_i, t_k)
    }

    fn pieces(&self, log: &DriveLog) -> Vec<DistancePiece> {
        let measured: Vec<&SpeedSample> = log.measured_speeds().collect();
        measured
            .windows(2)
            .map(|w| DistancePiece { t: w[0].t, length: w[1].v * (w[1].t - w[0].t) })
            .collect()
    }

    fn sample_times(&self, log: &DriveLog) -> Vec<Timestamp> {
        log.measured_speeds().map(|s| s.t).collect()
    }

    fn missing_error(&self, t_i: Timestamp, t_k: Timestamp) -> MetricsError {
        MetricsError::NoSpeedInRange { t_i, t_k }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeTotals {
    pub auto_distance: f64,
    pub manual_distance: f64,
    pub auto_uptime: f64,
    pub manual_uptime: f64,
    pub n_interventions: usize,
}

impl ModeTotals {
    pub fn total_distance(&self) -> f64 {
        self.auto_distance + self.manual_distance
    }

    pub fn total_uptime(&self) -> f64 {
        self.auto_uptime + self.manual_uptime
    }

    fn add_distance(&mut self, mode: Mode, d: f64) {
        match mode {
            Mode::Autonomous => self.auto_distance += d,
            Mode::Manual => self.manual_distance += d,
        }
    }

    fn add_uptime(&mut self, mode: Mode, dt: f64) {
        match mode {
            Mode::Autonomous => self.auto_uptime += dt,
            Mode::Manual => self.manual_uptime += dt,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "auto_distance": fixed(self.auto_distance),
            "manual_distance": fixed(self.manual_distance),
            "auto_uptime": fixed(self.auto_uptime),
            "manual_uptime": fixed(self.manual_uptime),
            "n_interventions": self.n_interventions,
        })
    }
}

impl Add for ModeTotals {
    type Output = ModeTotals;

    fn add(mut self, rhs: ModeTotals) -> ModeTotals {
        self += rhs;
        self
    }
}

impl AddAssign for ModeTotals {
    fn add_assign(&mut self, rhs: ModeTotals) {
        self.auto_distance += rhs.auto_distance;
        self.manual_distance += rhs.manual_distance;
        self.auto_uptime += rhs.auto_uptime;
        self.manual_uptime += rhs.manual_uptime;
        self.n_interventions += rhs.n_interventions;
    }
}

impl std::iter::Sum for ModeTotals {
    fn sum<I: Iterator<Item = ModeTotals>>(iter: I) -> ModeTotals {
        iter.fold(ModeTotals::default(), Add::add)
    }
}

fn segment_index(segments: &[Segment], t: Timestamp) -> Option<usize> {
    let i = segments.partition_point(|s| s.t_start <= t).checked_sub(1)?;
    segments[i].contains(t).then_some(i)
}

/// Per-mode distance and uptime sums over the segments of one log.
///
/// Fills `Segment::distance` for every segment. A segment with no sample of
/// the method's channel in its closed span is an error unless it lies
/// strictly inside the channel's coverage.
pub fn segment_totals(
    log: &DriveLog,
    segmentation: &mut Segmentation,
    method: &dyn DistanceMethod,
) -> Result<ModeTotals, MetricsError> {
    let times = method.sample_times(log);
    let n_interventions = segmentation.n_interventions();
    let segments = &mut segmentation.segments;
    for (index, seg) in segments.iter().enumerate() {
        let lo = times.partition_point(|&t| t < seg.t_start);
        let has_sample = lo < times.len() && times[lo] <= seg.t_end;
        let covered = !times.is_empty() && times[0] < seg.t_start && seg.t_end < times[times.len() - 1];
        if !has_sample && !covered {
            return Err(MetricsError::Segment {
                index,
                source: Box::new(method.missing_error(seg.t_start, seg.t_end)),
            });
        }
    }

    for seg in segments.iter_mut() {
        seg.distance = 0.0;
    }
    for piece in method.pieces(log) {
        if let Some(i) = segment_index(segments, piece.t) {
            segments[i].distance += piece.length;
        }
    }

    let mut totals = ModeTotals { n_interventions, ..Default::default() };
    for seg in segments.iter() {
        totals.add_distance(seg.mode, seg.distance);
        totals.add_uptime(seg.mode, seg.uptime);
    }
    Ok(totals)
}

/// Splits a log's totals by a pose-based classification.
///
/// `classify(from, to)` labels the pose interval starting at `from`; time
/// before the first pose or after the last one uses that pose for both
/// ends. Distance pieces and uptime are labelled by the pose interval
/// containing them; an intervention by the pose nearest its falling edge.
/// Unlabelled (`None`) portions are dropped.
pub fn attribute_totals<K: Ord + Clone>(
    log: &DriveLog,
    segmentation: &Segmentation,
    method: &dyn DistanceMethod,
    classify: impl Fn(&Pose, &Pose) -> Option<K>,
) -> Result<BTreeMap<K, ModeTotals>, MetricsError> {
    let poses = &log.poses;
    if poses.is_empty() {
        return Err(MetricsError::NoPoses);
    }
    let n = poses.len();
    // labels[j + 1] is the label of the interval starting at pose j, j in -1..n
    let labels: Vec<Option<K>> = (-1..n as isize)
        .map(|j| {
            let from = &poses[j.max(0) as usize];
            let to = &poses[((j + 1) as usize).min(n - 1)];
            classify(from, to)
        })
        .collect();
    let label_at = |t: Timestamp| &labels[poses.partition_point(|p| p.t <= t)];

    let segments = &segmentation.segments;
    let mut out: BTreeMap<K, ModeTotals> = BTreeMap::new();

    for piece in method.pieces(log) {
        if let (Some(i), Some(key)) = (segment_index(segments, piece.t), label_at(piece.t)) {
            out.entry(key.clone()).or_default().add_distance(segments[i].mode, piece.length);
        }
    }

    for seg in segments {
        let mut cur = seg.t_start;
        let mut j = poses.partition_point(|p| p.t <= cur);
        while j < n && poses[j].t < seg.t_end {
            if let Some(key) = &labels[j] {
                out.entry(key.clone()).or_default().add_uptime(seg.mode, poses[j].t - cur);
            }
            cur = poses[j].t;
            j += 1;
        }
        if let Some(key) = &labels[j] {
            out.entry(key.clone()).or_default().add_uptime(seg.mode, seg.t_end - cur);
        }
    }

    for t in segmentation.intervention_times() {
        let p = &poses[nearest_index(poses, t, |p| p.t).expect("poses non-empty")];
        if let Some(key) = classify(p, p) {
            out.entry(key).or_default().n_interventions += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub group_key: String,
    /// `None` means no interventions.
    pub mdbi: Option<f64>,
    pub mtbi: Option<f64>,
    pub mdbi_a: Option<f64>,
    pub mtbi_a: Option<f64>,
    pub mdbi_m: f64,
    pub mtbi_m: f64,
    pub totals: ModeTotals,
}

impl MetricsReport {
    pub fn no_interventions(&self) -> bool {
        self.totals.n_interventions == 0
    }

    pub fn to_json(&self) -> Value {
        json!({
            "group_key": self.group_key,
            "no_interventions": self.no_interventions(),
            "mdbi": fixed_opt(self.mdbi),
            "mtbi": fixed_opt(self.mtbi),
            "mdbi_a": fixed_opt(self.mdbi_a),
            "mtbi_a": fixed_opt(self.mtbi_a),
            "mdbi_m": fixed(self.mdbi_m),
            "mtbi_m": fixed(self.mtbi_m),
            "totals": self.totals.to_json(),
        })
    }
}

/// The six ratios for one set of totals.
pub fn compute_metrics(totals: ModeTotals, group_key: impl Into<String>) -> MetricsReport {
    let group_key = group_key.into();
    let n = totals.n_interventions;
    if n == 0 {
        return MetricsReport {
            group_key,
            mdbi: None,
            mtbi: None,
            mdbi_a: None,
            mtbi_a: None,
            mdbi_m: 0.0,
            mtbi_m: 0.0,
            totals,
        };
    }
    let n = n as f64;
    MetricsReport {
        group_key,
        mdbi: Some(totals.total_distance() / n),
        mtbi: Some(totals.total_uptime() / n),
        mdbi_a: Some(totals.auto_distance / n),
        mtbi_a: Some(totals.auto_uptime / n),
        mdbi_m: totals.manual_distance / n,
        mtbi_m: totals.manual_uptime / n,
        totals,
    }
}

/// Assigns each log to a named group.
pub trait Grouping: Send + Sync {
    fn name(&self) -> &'static str;

    /// Group of `log`; `fallback_id` names logs without a `log_id`.
    fn key(&self, log: &DriveLog, fallback_id: &str) -> Result<String, MetricsError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ByLog;

impl Grouping for ByLog {
    fn name(&self) -> &'static str {
        "log"
    }

    fn key(&self, log: &DriveLog, fallback_id: &str) -> Result<String, MetricsError> {
        Ok(log.log_id.clone().unwrap_or_else(|| fallback_id.to_string()))
    }
}

/// Groups by the `route=<name>` note.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByRoute;

impl Grouping for ByRoute {
    fn name(&self) -> &'static str {
        "route"
    }

    fn key(&self, log: &DriveLog, fallback_id: &str) -> Result<String, MetricsError> {
        log.route().map(str::to_string).ok_or_else(|| MetricsError::UnknownGroupKey {
            log: log.log_id.clone().unwrap_or_else(|| fallback_id.to_string()),
            reason: "no `route=` note".into(),
        })
    }
}

/// Named inclusive calendar ranges (UTC dates), matched against the log's
/// first engagement sample (or earliest sample when there is none).
#[derive(Debug, Clone, PartialEq)]
pub struct ByPeriod {
    pub periods: Vec<(String, NaiveDate, NaiveDate)>,
}

impl ByPeriod {
    /// Parses `name=YYYY-MM-DD..YYYY-MM-DD[,name=...]`.
    pub fn parse(args: &str) -> Result<ByPeriod, String> {
        let mut periods = Vec::new();
        for item in args.split(',').filter(|s| !s.is_empty()) {
            let (name, range) = item.split_once('=').ok_or_else(|| format!("`{item}`: expected name=start..end"))?;
            let (a, b) = range.split_once("..").ok_or_else(|| format!("`{item}`: expected start..end"))?;
            let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("`{s}`: {e}"));
            let (start, end) = (date(a)?, date(b)?);
            if end < start {
                return Err(format!("`{item}`: end precedes start"));
            }
            periods.push((name.to_string(), start, end));
        }
        if periods.is_empty() {
            return Err("at least one period is required".into());
        }
        Ok(ByPeriod { periods })
    }
}

impl Grouping for ByPeriod {
    fn name(&self) -> &'static str {
        "period"
    }

    fn key(&self, log: &DriveLog, fallback_id: &str) -> Result<String, MetricsError> {
        let id = || log.log_id.clone().unwrap_or_else(|| fallback_id.to_string());
        let t = log.engagement.first().map(|e| e.t).or_else(|| log.start_time()).ok_or_else(|| {
            MetricsError::UnknownGroupKey { log: id(), reason: "log has no timestamps".into() }
        })?;
        let date = DateTime::from_timestamp(t.floor() as i64, 0)
            .map(|d| d.date_naive())
            .ok_or_else(|| MetricsError::UnknownGroupKey { log: id(), reason: format!("timestamp {t} out of range") })?;
        self.periods
            .iter()
            .find(|(_, start, end)| *start <= date && date <= *end)
            .map(|(name, _, _)| name.clone())
            .ok_or_else(|| MetricsError::UnknownGroupKey { log: id(), reason: format!("{date} is in no period") })
    }
}

/// One report per group, sorted by group key. Member totals are summed
/// before the ratios are taken.
pub fn group_metrics<'a>(
    entries: impl IntoIterator<Item = (&'a DriveLog, &'a str, ModeTotals)>,
    grouping: &dyn Grouping,
) -> Result<Vec<MetricsReport>, MetricsError> {
    let mut groups: BTreeMap<String, ModeTotals> = BTreeMap::new();
    for (log, id, totals) in entries {
        *groups.entry(grouping.key(log, id)?).or_default() += totals;
    }
    Ok(groups.into_iter().map(|(k, t)| compute_metrics(t, k)).collect())
}
