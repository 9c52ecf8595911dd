//! Intervention occupancy grids and region-scoped metrics.
//!
//! Each pose is paired with the engagement sample nearest in time. Disabled
//! pairs are counted into cells of a square lattice anchored at `origin`,
//! then the grid is divided by its maximum so the busiest cell reads 1.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{polygon_contains, signed_area, Point};
use crate::metrics::{attribute_totals, compute_metrics, DistanceMethod, MetricsError, MetricsReport};
use crate::output::{fixed, fixed_str};
use crate::segmentation::Segmentation;
use crate::telemetry::{nearest_index, DriveLog, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("{0} channel is empty")]
    EmptyChannel(&'static str),
    #[error("cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("grids with different lattices cannot be merged")]
    LatticeMismatch,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("line {line_no}: {reason}")]
    Parse { line_no: usize, reason: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Pairs every pose with the engagement state nearest in time (ties to the
/// earlier engagement sample).
pub fn associate_dbw_pose(log: &DriveLog) -> Result<Vec<(Pose, bool)>, MapError> {
    if log.poses.is_empty() {
        return Err(MapError::EmptyChannel("poses"));
    }
    if log.engagement.is_empty() {
        return Err(MapError::EmptyChannel("engagement"));
    }
    Ok(log
        .poses
        .iter()
        .map(|p| {
            let i = nearest_index(&log.engagement, p.t, |e| e.t).expect("engagement non-empty");
            (*p, log.engagement[i].enabled)
        })
        .collect())
}

/// Which disabled pose pairs increment the grid.
pub trait CountMode: Send + Sync {
    fn name(&self) -> &'static str;

    /// Indices into `pairs` that each add one to their cell.
    fn events(&self, pairs: &[(Pose, bool)]) -> Vec<usize>;
}

/// Every disabled pair counts, so long interventions weigh more.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleCount;

impl CountMode for SampleCount {
    fn name(&self) -> &'static str {
        "sample"
    }

    fn events(&self, pairs: &[(Pose, bool)]) -> Vec<usize> {
        pairs.iter().enumerate().filter(|(_, (_, enabled))| !enabled).map(|(i, _)| i).collect()
    }
}

/// Only the first pair of each contiguous disabled run counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeCount;

impl CountMode for EdgeCount {
    fn name(&self) -> &'static str {
        "edge"
    }

    fn events(&self, pairs: &[(Pose, bool)]) -> Vec<usize> {
        (0..pairs.len()).filter(|&i| !pairs[i].1 && (i == 0 || pairs[i - 1].1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    pub cell_size: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { origin: [0.0, 0.0], cell_size: 1.0 }
    }
}

impl GridSpec {
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.cell_size).floor() as i64,
            ((y - self.origin[1]) / self.cell_size).floor() as i64,
        )
    }
}

/// Cell counts stored x-major: `counts[ix * height + iy]`, covering cells
/// `0..width` by `0..height` from the origin. Events that fall below or
/// left of the origin are tallied in `clipped`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
    pub normalized: Vec<f64>,
    pub count_mode: String,
    pub clipped: u64,
}

impl OccupancyGrid {
    pub fn empty(spec: GridSpec, count_mode: &str) -> Self {
        OccupancyGrid {
            spec,
            width: 0,
            height: 0,
            counts: Vec::new(),
            normalized: Vec::new(),
            count_mode: count_mode.to_string(),
            clipped: 0,
        }
    }

    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        if ix < self.width && iy < self.height {
            self.counts[ix * self.height + iy]
        } else {
            0
        }
    }

    pub fn normalized_at(&self, ix: usize, iy: usize) -> f64 {
        if ix < self.width && iy < self.height {
            self.normalized[ix * self.height + iy]
        } else {
            0.0
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    fn resize(&mut self, width: usize, height: usize) {
        if width <= self.width && height <= self.height {
            return;
        }
        let (w, h) = (width.max(self.width), height.max(self.height));
        let mut counts = vec![0; w * h];
        for ix in 0..self.width {
            for iy in 0..self.height {
                counts[ix * h + iy] = self.counts[ix * self.height + iy];
            }
        }
        self.width = w;
        self.height = h;
        self.counts = counts;
    }

    /// Divides by the maximum count; an all-zero grid stays all zero.
    pub fn normalize(&mut self) {
        let max = self.max_count();
        self.normalized = if max == 0 {
            vec![0.0; self.counts.len()]
        } else {
            self.counts.iter().map(|&c| c as f64 / max as f64).collect()
        };
    }

    /// Element-wise sum of counts, then renormalized.
    pub fn merge(&mut self, other: &OccupancyGrid) -> Result<(), MapError> {
        if self.spec != other.spec {
            return Err(MapError::LatticeMismatch);
        }
        self.resize(other.width, other.height);
        for ix in 0..other.width {
            for iy in 0..other.height {
                self.counts[ix * self.height + iy] += other.counts[ix * other.height + iy];
            }
        }
        self.clipped += other.clipped;
        self.normalize();
        Ok(())
    }

    /// Non-zero cells as `(x_index, y_index, count, normalized)`, x-major.
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (usize, usize, u64, f64)> + '_ {
        (0..self.width).flat_map(move |ix| {
            (0..self.height).filter_map(move |iy| {
                let c = self.count(ix, iy);
                (c > 0).then(|| (ix, iy, c, self.normalized_at(ix, iy)))
            })
        })
    }

    pub fn to_json(&self) -> Value {
        let cells: Vec<Value> = self
            .nonzero_cells()
            .map(|(ix, iy, c, n)| json!({"x_index": ix, "y_index": iy, "count": c, "normalized": fixed(n)}))
            .collect();
        json!({
            "origin": [fixed(self.spec.origin[0]), fixed(self.spec.origin[1])],
            "cell_size": fixed(self.spec.cell_size),
            "width": self.width,
            "height": self.height,
            "count_mode": self.count_mode,
            "total": self.total(),
            "clipped": self.clipped,
            "cells": cells,
        })
    }
}

/// Counts a single log's interventions into a grid whose extent covers all
/// of its poses.
pub fn build_grid(log: &DriveLog, spec: GridSpec, mode: &dyn CountMode) -> Result<OccupancyGrid, MapError> {
    if !(spec.cell_size > 0.0) || !spec.cell_size.is_finite() {
        return Err(MapError::NonPositiveCellSize(spec.cell_size));
    }
    let pairs = associate_dbw_pose(log)?;
    let mut grid = OccupancyGrid::empty(spec, mode.name());
    let (mut w, mut h) = (0i64, 0i64);
    for (p, _) in &pairs {
        let (ix, iy) = spec.cell_of(p.x, p.y);
        w = w.max(ix + 1);
        h = h.max(iy + 1);
    }
    grid.resize(w.max(0) as usize, h.max(0) as usize);
    for i in mode.events(&pairs) {
        let p = &pairs[i].0;
        match spec.cell_of(p.x, p.y) {
            (ix, iy) if ix >= 0 && iy >= 0 => {
                let k = ix as usize * grid.height + iy as usize;
                grid.counts[k] += 1;
            }
            _ => grid.clipped += 1,
        }
    }
    grid.normalize();
    Ok(grid)
}

/// Accumulates several logs into one grid. Per-log grids are merged in input
/// order, so the result does not depend on `parallel`.
pub fn build_grid_many(
    logs: &[&DriveLog],
    spec: GridSpec,
    mode: &dyn CountMode,
    parallel: bool,
) -> Result<OccupancyGrid, MapError> {
    let grids: Vec<Result<OccupancyGrid, MapError>> = if parallel {
        logs.par_iter().map(|l| build_grid(l, spec, mode)).collect()
    } else {
        logs.iter().map(|l| build_grid(l, spec, mode)).collect()
    };
    let mut out = OccupancyGrid::empty(spec, mode.name());
    for g in grids {
        out.merge(&g?)?;
    }
    out.normalize();
    Ok(out)
}

pub fn export_csv(grid: &OccupancyGrid) -> String {
    let mut out = String::from("x_index,y_index,count,normalized\n");
    for (ix, iy, c, n) in grid.nonzero_cells() {
        let _ = writeln!(out, "{ix},{iy},{c},{}", fixed_str(n));
    }
    out
}

/// Grey level for a normalized value, rounding halves up.
pub fn pixel_value(normalized: f64) -> u8 {
    (normalized * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Plain (P2) PGM, maxval 255. The first image row is the highest y index.
pub fn export_pgm(grid: &OccupancyGrid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.width, grid.height);
    for iy in (0..grid.height).rev() {
        let row: Vec<String> = (0..grid.width).map(|ix| pixel_value(grid.normalized_at(ix, iy)).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Pgm,
}

pub fn export_grid(grid: &OccupancyGrid, format: GridFormat) -> String {
    match format {
        GridFormat::Csv => export_csv(grid),
        GridFormat::Pgm => export_pgm(grid),
    }
}

/// A simple polygon, implicitly closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub polygon: Vec<Point>,
}

impl Region {
    pub fn new(polygon: Vec<Point>) -> Result<Region, MapError> {
        if polygon.len() < 3 {
            return Err(MapError::DegeneratePolygon(format!("{} vertices", polygon.len())));
        }
        if polygon.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MapError::DegeneratePolygon("non-finite vertex".into()));
        }
        if signed_area(&polygon).abs() <= f64::EPSILON {
            return Err(MapError::DegeneratePolygon("zero area".into()));
        }
        Ok(Region { polygon })
    }

    /// Reads `vertex,x,y` lines.
    pub fn parse<R: Read>(reader: R) -> Result<Region, MapError> {
        let mut pts = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| MapError::Parse { line_no, reason };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 || f[0] != "vertex" {
                return Err(err(format!("expected `vertex,x,y`, got `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("`{s}` is not a number")));
            pts.push([num(f[1])?, num(f[2])?]);
        }
        Region::new(pts)
    }

    pub fn contains(&self, p: Point) -> bool {
        polygon_contains(&self.polygon, p)
    }
}

/// Metrics restricted to travel that starts inside `region`; interventions
/// count when the pose nearest the falling edge is inside.
pub fn region_metrics(
    log: &DriveLog,
    segmentation: &Segmentation,
    region: &Region,
    method: &dyn DistanceMethod,
) -> Result<MetricsReport, MapError> {
    let split = attribute_totals(log, segmentation, method, |from, _| region.contains(from.xy()).then_some(()))?;
    let totals = split.get(&()).copied().unwrap_or_default();
    Ok(compute_metrics(totals, "region"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::EngagementSample;

    fn log_with(poses: &[(f64, f64, f64)], engagement: &[(f64, bool)]) -> DriveLog {
        DriveLog {
            poses: poses.iter().map(|&(t, x, y)| Pose::at(t, x, y, 0.0)).collect(),
            engagement: engagement.iter().map(|&(t, e)| EngagementSample::new(t, e)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn nearest_engagement() {
        let log = log_with(&[(1.0, 0.0, 0.0)], &[(0.9, true), (1.4, false)]);
        assert!(associate_dbw_pose(&log).unwrap()[0].1);
        let log = log_with(&[(1.25, 0.0, 0.0)], &[(1.0, true), (1.5, false)]);
        assert!(associate_dbw_pose(&log).unwrap()[0].1);
        let log = log_with(&[(1.15, 0.0, 0.0)], &[(1.0, true), (1.3, false)]);
        assert!(associate_dbw_pose(&log).unwrap()[0].1);
        let log = log_with(&[(0.0, 0.0, 0.0), (5.0, 1.0, 0.0), (9.0, 2.0, 0.0)], &[(3.0, false)]);
        assert!(associate_dbw_pose(&log).unwrap().iter().all(|(_, e)| !e));
        assert_eq!(associate_dbw_pose(&log_with(&[], &[(0.0, true)])), Err(MapError::EmptyChannel("poses")));
    }

    #[test]
    fn single_event() {
        let log = log_with(&[(0.0, 2.3, 5.7)], &[(0.0, false)]);
        let g = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        assert_eq!(g.count(2, 5), 1);
        assert_eq!(g.normalized_at(2, 5), 1.0);
        assert_eq!((g.width, g.height), (3, 6));
    }

    #[test]
    fn three_events_two_cells() {
        let log = log_with(&[(0.0, 2.3, 5.7), (1.0, 2.9, 5.1), (2.0, 7.4, 1.2)], &[(0.0, false)]);
        let g = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        assert_eq!(g.count(2, 5), 2);
        assert_eq!(g.count(7, 1), 1);
        assert_eq!(g.normalized_at(2, 5), 1.0);
        assert_eq!(g.normalized_at(7, 1), 0.5);
        assert_eq!(export_csv(&g), "x_index,y_index,count,normalized\n2,5,2,1.000000\n7,1,1,0.500000\n");
        let edge = build_grid(&log, GridSpec::default(), &EdgeCount).unwrap();
        assert_eq!(edge.total(), 1);
    }

    #[test]
    fn enabled_log_gives_zero_grid() {
        let log = log_with(&[(0.0, 1.0, 1.0), (1.0, 3.0, 2.0)], &[(0.0, true)]);
        let g = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        assert_eq!(g.total(), 0);
        assert!(g.normalized.iter().all(|&v| v == 0.0));
        assert_eq!(export_pgm(&g), "P2\n4 3\n255\n0 0 0 0\n0 0 0 0\n0 0 0 0\n");
    }

    #[test]
    fn bad_cell_size() {
        let log = log_with(&[(0.0, 1.0, 1.0)], &[(0.0, true)]);
        let spec = GridSpec { cell_size: 0.0, ..Default::default() };
        assert_eq!(build_grid(&log, spec, &SampleCount), Err(MapError::NonPositiveCellSize(0.0)));
    }

    #[test]
    fn negative_coordinates_are_clipped_unless_origin_moves() {
        let log = log_with(&[(0.0, -1.5, 0.5), (1.0, 0.5, 0.5)], &[(0.0, false)]);
        let g = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        assert_eq!((g.total(), g.clipped), (1, 1));
        let g = build_grid(&log, GridSpec { origin: [-2.0, 0.0], cell_size: 1.0 }, &SampleCount).unwrap();
        assert_eq!((g.total(), g.clipped), (2, 0));
        assert_eq!(g.count(0, 0), 1);
        assert_eq!(g.count(2, 0), 1);
    }

    #[test]
    fn pgm_pixels() {
        assert_eq!(pixel_value(1.0), 255);
        assert_eq!(pixel_value(0.5), 128);
        assert_eq!(pixel_value(0.0), 0);
        let log = log_with(&[(0.0, 0.5, 0.5), (1.0, 0.6, 0.6), (2.0, 1.5, 1.5)], &[(0.0, false)]);
        let g = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        // row 0 of the image is y index 1
        assert_eq!(export_pgm(&g), "P2\n2 2\n255\n0 128\n255 0\n");
    }

    #[test]
    fn merge_needs_same_lattice() {
        let log = log_with(&[(0.0, 0.5, 0.5)], &[(0.0, false)]);
        let mut a = build_grid(&log, GridSpec::default(), &SampleCount).unwrap();
        let b = build_grid(&log, GridSpec { cell_size: 2.0, ..Default::default() }, &SampleCount).unwrap();
        assert_eq!(a.merge(&b), Err(MapError::LatticeMismatch));
    }

    #[test]
    fn region_parsing() {
        let r = Region::parse("vertex,0,0\nvertex,10,0\nvertex,10,10\n".as_bytes()).unwrap();
        assert!(r.contains([10.0, 5.0]));
        assert!(matches!(Region::parse("vertex,0,0\nvertex,1,1\n".as_bytes()), Err(MapError::DegeneratePolygon(_))));
        assert!(matches!(Region::parse("vertex,0,0\nvertex,1,1\nvertex,2,2\n".as_bytes()), Err(MapError::DegeneratePolygon(_))));
        assert!(matches!(Region::parse("pt,0,0\n".as_bytes()), Err(MapError::Parse { line_no: 1, .. })));
    }
}
