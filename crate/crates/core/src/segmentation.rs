//! Splits the engagement signal into alternating autonomous and manual spans.
//!
//! The signal is treated as a right-continuous step function: between two
//! samples the state is that of the earlier sample, and a change is stamped
//! at the sample that reveals it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{EngagementSample, Timestamp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmentationError {
    #[error("engagement channel is empty")]
    EmptyChannel,
    #[error("min_dwell must be a non-negative number, got {0}")]
    InvalidDwell(f64),
    #[error("segment end {end} precedes the last engagement sample at {last}")]
    EndBeforeLastSample { end: Timestamp, last: Timestamp },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Autonomous,
    Manual,
}

impl Mode {
    pub fn from_enabled(enabled: bool) -> Mode {
        if enabled {
            Mode::Autonomous
        } else {
            Mode::Manual
        }
    }

    pub fn flipped(self) -> Mode {
        match self {
            Mode::Autonomous => Mode::Manual,
            Mode::Manual => Mode::Autonomous,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    /// Autonomous to manual: an intervention.
    Falling,
    /// Manual to autonomous: re-enable.
    Rising,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub t: Timestamp,
    pub direction: EdgeDirection,
}

/// A maximal span of constant driving mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mode: Mode,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    /// Meters; zero until filled by [`crate::metrics::segment_totals`].
    pub distance: f64,
    pub uptime: f64,
}

impl Segment {
    pub fn new(mode: Mode, t_start: Timestamp, t_end: Timestamp) -> Self {
        Segment { mode, t_start, t_end, distance: 0.0, uptime: t_end - t_start }
    }

    /// Half-open membership test, `[t_start, t_end)`.
    pub fn contains(&self, t: Timestamp) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// Edge events of the engagement signal, with opposite edges closer than
/// `min_dwell` seconds removed in pairs, scanning left to right.
pub fn detect_edges(engagement: &[EngagementSample], min_dwell: f64) -> Result<Vec<EdgeEvent>, SegmentationError> {
    if engagement.is_empty() {
        return Err(SegmentationError::EmptyChannel);
    }
    if !(min_dwell >= 0.0) || !min_dwell.is_finite() {
        return Err(SegmentationError::InvalidDwell(min_dwell));
    }
    let raw = engagement.windows(2).filter(|w| w[0].enabled != w[1].enabled).map(|w| EdgeEvent {
        t: w[1].t,
        direction: if w[1].enabled { EdgeDirection::Rising } else { EdgeDirection::Falling },
    });
    Ok(debounce(raw, min_dwell))
}

fn debounce(edges: impl Iterator<Item = EdgeEvent>, min_dwell: f64) -> Vec<EdgeEvent> {
    let mut kept: Vec<EdgeEvent> = Vec::new();
    for edge in edges {
        match kept.last() {
            Some(last) if last.direction != edge.direction && edge.t - last.t < min_dwell => {
                kept.pop();
            }
            _ => kept.push(edge),
        }
    }
    kept
}

/// Segments of one engagement channel together with the edges that delimit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub edges: Vec<EdgeEvent>,
}

impl Segmentation {
    /// Falling edges after debounce.
    pub fn n_interventions(&self) -> usize {
        count_falling_edges(&self.edges)
    }

    pub fn intervention_times(&self) -> Vec<Timestamp> {
        self.edges.iter().filter(|e| e.direction == EdgeDirection::Falling).map(|e| e.t).collect()
    }
}

/// Segments tiling `[first.t, last.t]` of the engagement channel.
pub fn build_segments(engagement: &[EngagementSample], min_dwell: f64) -> Result<Vec<Segment>, SegmentationError> {
    Ok(segment_signal(engagement, min_dwell)?.segments)
}

/// Like [`build_segments`] but the final segment runs to `end`, which must
/// not precede the last sample.
pub fn build_segments_until(
    engagement: &[EngagementSample],
    min_dwell: f64,
    end: Timestamp,
) -> Result<Vec<Segment>, SegmentationError> {
    Ok(segment_signal_until(engagement, min_dwell, end)?.segments)
}

pub fn segment_signal(engagement: &[EngagementSample], min_dwell: f64) -> Result<Segmentation, SegmentationError> {
    let last = engagement.last().ok_or(SegmentationError::EmptyChannel)?.t;
    segment_signal_until(engagement, min_dwell, last)
}

pub fn segment_signal_until(
    engagement: &[EngagementSample],
    min_dwell: f64,
    end: Timestamp,
) -> Result<Segmentation, SegmentationError> {
    let edges = detect_edges(engagement, min_dwell)?;
    let first = engagement[0];
    let last = engagement[engagement.len() - 1].t;
    if end < last {
        return Err(SegmentationError::EndBeforeLastSample { end, last });
    }

    let mut segments = Vec::with_capacity(edges.len() + 1);
    let mut mode = Mode::from_enabled(first.enabled);
    let mut start = first.t;
    for edge in &edges {
        if edge.t > start {
            segments.push(Segment::new(mode, start, edge.t));
        }
        mode = mode.flipped();
        start = edge.t;
    }
    // An edge on the final sample opens no segment; it still counts as an edge.
    if end > start {
        segments.push(Segment::new(mode, start, end));
    }
    Ok(Segmentation { segments, edges })
}

/// Number of autonomous-to-manual transitions in a segment list.
///
/// A log that begins in manual mode was never disengaged there, so its
/// leading manual segment is not counted.
pub fn count_interventions(segments: &[Segment]) -> usize {
    segments
        .windows(2)
        .filter(|w| w[0].mode == Mode::Autonomous && w[1].mode == Mode::Manual)
        .count()
}

pub fn count_falling_edges(edges: &[EdgeEvent]) -> usize {
    edges.iter().filter(|e| e.direction == EdgeDirection::Falling).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signal(pairs: &[(f64, u8)]) -> Vec<EngagementSample> {
        pairs.iter().map(|&(t, v)| EngagementSample::new(t, v == 1)).collect()
    }

    fn spans(segments: &[Segment]) -> Vec<(Mode, f64, f64)> {
        segments.iter().map(|s| (s.mode, s.t_start, s.t_end)).collect()
    }

    #[test]
    fn edges_read_directly() {
        let e = detect_edges(&signal(&[(0.0, 1), (1.0, 1), (2.0, 0), (3.0, 0), (4.0, 1)]), 0.0).unwrap();
        assert_eq!(
            e,
            vec![
                EdgeEvent { t: 2.0, direction: EdgeDirection::Falling },
                EdgeEvent { t: 4.0, direction: EdgeDirection::Rising }
            ]
        );
    }

    #[test]
    fn constant_signal_has_no_edges() {
        assert!(detect_edges(&signal(&[(0.0, 1), (1.0, 1), (9.0, 1)]), 0.0).unwrap().is_empty());
    }

    #[test]
    fn short_blip_is_debounced() {
        let s = signal(&[(0.0, 1), (1.0, 0), (1.2, 1), (5.0, 0)]);
        let e = detect_edges(&s, 0.5).unwrap();
        assert_eq!(e, vec![EdgeEvent { t: 5.0, direction: EdgeDirection::Falling }]);
        let segs = build_segments_until(&s, 0.5, 8.0).unwrap();
        assert_eq!(spans(&segs), vec![(Mode::Autonomous, 0.0, 5.0), (Mode::Manual, 5.0, 8.0)]);
    }

    #[test]
    fn empty_channel() {
        assert_eq!(detect_edges(&[], 0.0), Err(SegmentationError::EmptyChannel));
        assert_eq!(build_segments(&[], 0.0), Err(SegmentationError::EmptyChannel));
    }

    #[test]
    fn three_segments() {
        let s = signal(&[(0.0, 1), (2.0, 0), (4.0, 1), (6.0, 1)]);
        let segs = build_segments(&s, 0.0).unwrap();
        assert_eq!(
            spans(&segs),
            vec![(Mode::Autonomous, 0.0, 2.0), (Mode::Manual, 2.0, 4.0), (Mode::Autonomous, 4.0, 6.0)]
        );
        assert_eq!(segs.iter().map(|s| s.uptime).collect::<Vec<_>>(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn single_sample_with_explicit_end() {
        let segs = build_segments_until(&signal(&[(0.0, 1)]), 0.0, 10.0).unwrap();
        assert_eq!(spans(&segs), vec![(Mode::Autonomous, 0.0, 10.0)]);
        assert!(build_segments(&signal(&[(0.0, 1)]), 0.0).unwrap().is_empty());
    }

    #[test]
    fn counting() {
        let fig = signal(&[(0.0, 1), (10.0, 0), (12.0, 1), (30.0, 0), (33.0, 1), (50.0, 1)]);
        assert_eq!(count_interventions(&build_segments(&fig, 0.0).unwrap()), 2);
        let auto = signal(&[(0.0, 1), (50.0, 1)]);
        assert_eq!(count_interventions(&build_segments(&auto, 0.0).unwrap()), 0);
        let starts_manual = signal(&[(0.0, 0), (5.0, 1), (50.0, 1)]);
        let segs = build_segments(&starts_manual, 0.0).unwrap();
        assert_eq!(count_interventions(&segs), 0);
        assert_eq!(segs[0].mode, Mode::Manual);
    }

    #[test]
    fn edge_at_last_sample_leaves_no_empty_segment() {
        let segs = build_segments(&signal(&[(0.0, 1), (3.0, 0)]), 0.0).unwrap();
        assert_eq!(spans(&segs), vec![(Mode::Autonomous, 0.0, 3.0)]);
        assert_eq!(count_interventions(&segs), 0);
        let seg = segment_signal(&signal(&[(0.0, 1), (3.0, 0)]), 0.0).unwrap();
        assert_eq!(seg.n_interventions(), 1);
        assert_eq!(seg.intervention_times(), vec![3.0]);
    }

    fn arb_signal() -> impl Strategy<Value = Vec<EngagementSample>> {
        prop::collection::vec((0.01f64..3.0, any::<bool>()), 1..60).prop_map(|steps| {
            let mut t = 0.0;
            steps
                .into_iter()
                .map(|(dt, v)| {
                    t += dt;
                    EngagementSample::new(t, v)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn segments_tile_the_channel(s in arb_signal(), dwell in 0.0f64..2.0) {
            let segs = build_segments(&s, dwell).unwrap();
            let span = s.last().unwrap().t - s[0].t;
            let total: f64 = segs.iter().map(|x| x.uptime).sum();
            prop_assert!((total - span).abs() <= 1e-9 * span.max(1.0));
            for w in segs.windows(2) {
                prop_assert_ne!(w[0].mode, w[1].mode);
                prop_assert_eq!(w[0].t_end, w[1].t_start);
            }
            for seg in &segs {
                prop_assert!(seg.t_end > seg.t_start);
            }
            if let Some(first) = segs.first() {
                prop_assert_eq!(first.t_start, s[0].t);
                prop_assert_eq!(first.mode, Mode::from_enabled(s[0].enabled));
            }
        }

        #[test]
        fn manual_segment_count_vs_falling_edges(s in arb_signal(), dwell in 0.0f64..2.0) {
            let edges = detect_edges(&s, dwell).unwrap();
            let segs = build_segments(&s, dwell).unwrap();
            let manual = segs.iter().filter(|x| x.mode == Mode::Manual).count();
            let falling = count_falling_edges(&edges);
            // a falling edge on the final sample opens no segment
            let trailing = usize::from(edges.last().is_some_and(|e| e.direction == EdgeDirection::Falling && e.t == s.last().unwrap().t));
            // a leading manual span exists only if the channel spans some time
            let lead = usize::from(!s[0].enabled && s.len() > 1);
            prop_assert_eq!(manual + trailing, falling + lead);
        }

        #[test]
        fn zero_dwell_is_identity(s in arb_signal()) {
            let raw: Vec<EdgeEvent> = s.windows(2).filter(|w| w[0].enabled != w[1].enabled).map(|w| EdgeEvent {
                t: w[1].t,
                direction: if w[1].enabled { EdgeDirection::Rising } else { EdgeDirection::Falling },
            }).collect();
            prop_assert_eq!(detect_edges(&s, 0.0).unwrap(), raw);
        }

        #[test]
        fn debounced_edges_alternate(s in arb_signal(), dwell in 0.0f64..5.0) {
            let edges = detect_edges(&s, dwell).unwrap();
            for w in edges.windows(2) {
                prop_assert_ne!(w[0].direction, w[1].direction);
            }
        }
    }
}
