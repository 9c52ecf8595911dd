//! Typed road segments, nearest-segment matching and per-road-type
//! breakdowns of a trip.
//!
//! Each chord between consecutive poses is attributed to the road matched at
//! its midpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{point_polyline_distance, polyline_length, Point};
use crate::metrics::{attribute_totals, compute_metrics, DistanceMethod, MetricsError, MetricsReport};
use crate::output::fixed;
use crate::segmentation::Segmentation;
use crate::telemetry::{nearest_index, DriveLog, Pose, Timestamp};

/// Default matching tolerance in meters.
pub const DEFAULT_TOLERANCE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoadError {
    #[error("line {line_no}: malformed segment: {reason}")]
    MalformedSegment { line_no: usize, reason: String },
    #[error("line {line_no}: duplicate segment id `{id}`")]
    DuplicateId { line_no: usize, id: String },
    #[error("line {line_no}: unknown road type `{name}`")]
    UnknownRoadType { line_no: usize, name: String },
    #[error("road network is empty")]
    EmptyNetwork,
    #[error("matching tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("log has no poses")]
    NoPoses,
    #[error("log has no measured speed samples")]
    NoSpeeds,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadType {
    /// No lane definitions; shared with pedestrians and other road users.
    Dynamic,
    Regular,
    Freeway,
    /// Controlled development or test roads.
    Private,
}

impl RoadType {
    pub const ALL: [RoadType; 4] = [RoadType::Dynamic, RoadType::Regular, RoadType::Freeway, RoadType::Private];

    pub fn name(self) -> &'static str {
        match self {
            RoadType::Dynamic => "dynamic",
            RoadType::Regular => "regular",
            RoadType::Freeway => "freeway",
            RoadType::Private => "private",
        }
    }

    pub fn from_name(s: &str) -> Option<RoadType> {
        RoadType::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: String,
    pub road_type: RoadType,
    pub polyline: Vec<Point>,
    /// m/s
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadNetwork {
    /// Sorted by id.
    pub segments: Vec<RoadSegment>,
}

impl RoadNetwork {
    pub fn new(mut segments: Vec<RoadSegment>) -> Result<RoadNetwork, RoadError> {
        let mut seen = BTreeSet::new();
        for s in &segments {
            check_segment(s, 0)?;
            if !seen.insert(s.id.clone()) {
                return Err(RoadError::DuplicateId { line_no: 0, id: s.id.clone() });
            }
        }
        segments.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(RoadNetwork { segments })
    }

    pub fn get(&self, id: &str) -> Option<&RoadSegment> {
        self.segments.binary_search_by(|s| s.id.as_str().cmp(id)).ok().map(|i| &self.segments[i])
    }
}

fn check_segment(s: &RoadSegment, line_no: usize) -> Result<(), RoadError> {
    let malformed = |reason: String| RoadError::MalformedSegment { line_no, reason };
    if s.polyline.len() < 2 {
        return Err(malformed(format!("`{}` has {} point(s), need at least 2", s.id, s.polyline.len())));
    }
    if !(polyline_length(&s.polyline) > 0.0) {
        return Err(malformed(format!("`{}` has zero length", s.id)));
    }
    if !(s.speed_limit > 0.0) || !s.speed_limit.is_finite() {
        return Err(malformed(format!("`{}` speed limit must be positive", s.id)));
    }
    Ok(())
}

/// Reads `segment,<id>,<type>,<speed_limit_mps>` headers, each followed by
/// `pt,x,y` lines.
pub fn load_network<R: Read>(reader: R) -> Result<RoadNetwork, RoadError> {
    let mut segments: Vec<(usize, RoadSegment)> = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let malformed = |reason: String| RoadError::MalformedSegment { line_no, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| malformed(format!("`{s}` is not a number")));
        match f[0] {
            "segment" => {
                if f.len() != 4 {
                    return Err(malformed("expected `segment,id,type,speed_limit`".into()));
                }
                if f[1].is_empty() {
                    return Err(malformed("empty segment id".into()));
                }
                let road_type = RoadType::from_name(f[2])
                    .ok_or_else(|| RoadError::UnknownRoadType { line_no, name: f[2].to_string() })?;
                if !ids.insert(f[1].to_string()) {
                    return Err(RoadError::DuplicateId { line_no, id: f[1].to_string() });
                }
                let speed_limit = num(f[3])?;
                segments.push((
                    line_no,
                    RoadSegment { id: f[1].to_string(), road_type, polyline: Vec::new(), speed_limit },
                ));
            }
            "pt" => {
                if f.len() != 3 {
                    return Err(malformed("expected `pt,x,y`".into()));
                }
                let (x, y) = (num(f[1])?, num(f[2])?);
                let (_, seg) = segments.last_mut().ok_or_else(|| malformed("`pt` before any `segment`".into()))?;
                seg.polyline.push([x, y]);
            }
            other => return Err(malformed(format!("unknown record `{other}`"))),
        }
    }
    for (line_no, s) in &segments {
        check_segment(s, *line_no)?;
    }
    RoadNetwork::new(segments.into_iter().map(|(_, s)| s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchResult<'a> {
    Matched { segment: &'a RoadSegment, distance: f64 },
    Unmatched,
}

impl<'a> MatchResult<'a> {
    pub fn segment(&self) -> Option<&'a RoadSegment> {
        match self {
            MatchResult::Matched { segment, .. } => Some(segment),
            MatchResult::Unmatched => None,
        }
    }
}

/// Segment nearest to `p` within `tolerance`; ties go to the smallest id.
pub fn match_point(network: &RoadNetwork, p: Point, tolerance: f64) -> Result<MatchResult<'_>, RoadError> {
    if network.segments.is_empty() {
        return Err(RoadError::EmptyNetwork);
    }
    if !(tolerance > 0.0) {
        return Err(RoadError::InvalidTolerance(tolerance));
    }
    let mut best: Option<(&RoadSegment, f64)> = None;
    // segments are sorted by id, so strict `<` keeps the smallest id on ties
    for s in &network.segments {
        let d = point_polyline_distance(p, &s.polyline);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((s, d));
        }
    }
    Ok(match best {
        Some((segment, distance)) if distance <= tolerance => MatchResult::Matched { segment, distance },
        _ => MatchResult::Unmatched,
    })
}

pub fn match_pose<'a>(network: &'a RoadNetwork, pose: &Pose, tolerance: f64) -> Result<MatchResult<'a>, RoadError> {
    match_point(network, pose.xy(), tolerance)
}

fn midpoint(a: &Pose, b: &Pose) -> Point {
    [(a.x + b.x) / 2.0, (a.y + b.y) / 2.0]
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripComposition {
    pub distance: BTreeMap<RoadType, f64>,
    /// Share of matched distance per type.
    pub fraction: BTreeMap<RoadType, f64>,
    pub unmatched_distance: f64,
}

impl TripComposition {
    pub fn matched_distance(&self) -> f64 {
        self.distance.values().sum()
    }

    /// Distance on controlled (private) roads, reported apart from public roads.
    pub fn private_distance(&self) -> f64 {
        self.distance.get(&RoadType::Private).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> Value {
        let per_type: Vec<Value> = self
            .distance
            .iter()
            .map(|(t, d)| json!({"road_type": t.name(), "distance": fixed(*d), "fraction": fixed(self.fraction[t])}))
            .collect();
        json!({
            "per_type": per_type,
            "matched_distance": fixed(self.matched_distance()),
            "unmatched_distance": fixed(self.unmatched_distance),
            "private_distance": fixed(self.private_distance()),
        })
    }
}

/// Distance per road type over all pose chords of the log.
pub fn classify_trip(log: &DriveLog, network: &RoadNetwork, tolerance: f64) -> Result<TripComposition, RoadError> {
    if log.poses.is_empty() {
        return Err(RoadError::NoPoses);
    }
    let mut comp = TripComposition::default();
    for w in log.poses.windows(2) {
        let len = w[0].distance_to(&w[1]);
        match match_point(network, midpoint(&w[0], &w[1]), tolerance)?.segment() {
            Some(seg) => *comp.distance.entry(seg.road_type).or_default() += len,
            None => comp.unmatched_distance += len,
        }
    }
    let matched = comp.matched_distance();
    if matched > 0.0 {
        comp.fraction = comp.distance.iter().map(|(t, d)| (*t, d / matched)).collect();
    } else {
        comp.fraction = comp.distance.keys().map(|t| (*t, 0.0)).collect();
    }
    Ok(comp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerTypeMetrics {
    pub reports: Vec<(RoadType, MetricsReport)>,
    /// Set when no pose matched any road.
    pub warning: Option<String>,
}

/// One metrics report per road type present in the trip.
pub fn per_type_metrics(
    log: &DriveLog,
    segmentation: &Segmentation,
    network: &RoadNetwork,
    tolerance: f64,
    method: &dyn DistanceMethod,
) -> Result<PerTypeMetrics, RoadError> {
    if log.poses.is_empty() {
        return Err(RoadError::NoPoses);
    }
    // surface empty-network / tolerance errors before attribution swallows them
    match_point(network, log.poses[0].xy(), tolerance)?;
    let split = attribute_totals(log, segmentation, method, |a, b| {
        match_point(network, midpoint(a, b), tolerance).ok().and_then(|m| m.segment()).map(|s| s.road_type)
    })?;
    let reports: Vec<(RoadType, MetricsReport)> =
        split.into_iter().map(|(t, totals)| (t, compute_metrics(totals, t.name()))).collect();
    let warning = reports.is_empty().then(|| "no pose matched any road segment".to_string());
    Ok(PerTypeMetrics { reports, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedViolation {
    pub t: Timestamp,
    pub v: f64,
    pub limit: f64,
    pub segment_id: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplianceReport {
    pub violations: Vec<SpeedViolation>,
    pub checked: usize,
    /// Samples whose nearest pose matched no road.
    pub skipped: usize,
}

impl ComplianceReport {
    pub fn to_json(&self) -> Value {
        let v: Vec<Value> = self
            .violations
            .iter()
            .map(|v| json!({"t": fixed(v.t), "v": fixed(v.v), "limit": fixed(v.limit), "segment_id": v.segment_id}))
            .collect();
        json!({"checked": self.checked, "skipped": self.skipped, "violations": v})
    }
}

/// Measured speeds strictly above the limit of the road matched at the pose
/// nearest in time.
pub fn speed_compliance(log: &DriveLog, network: &RoadNetwork, tolerance: f64) -> Result<ComplianceReport, RoadError> {
    if log.poses.is_empty() {
        return Err(RoadError::NoPoses);
    }
    let mut report = ComplianceReport::default();
    let mut any = false;
    for s in log.measured_speeds() {
        any = true;
        let pose = &log.poses[nearest_index(&log.poses, s.t, |p| p.t).expect("poses non-empty")];
        match match_pose(network, pose, tolerance)?.segment() {
            Some(seg) => {
                report.checked += 1;
                if s.v > seg.speed_limit {
                    report.violations.push(SpeedViolation { t: s.t, v: s.v, limit: seg.speed_limit, segment_id: seg.id.clone() });
                }
            }
            None => report.skipped += 1,
        }
    }
    if !any {
        return Err(RoadError::NoSpeeds);
    }
    Ok(report)
}

pub fn per_type_json(per_type: &PerTypeMetrics) -> Value {
    json!({
        "reports": per_type.reports.iter().map(|(_, r)| r.to_json()).collect::<Vec<_>>(),
        "warning": per_type.warning,
    })
}
