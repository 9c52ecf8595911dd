//! JSON documents emitted by the command-line tool.
//!
//! Each subcommand output is `{"config": ..}` followed by one section; the
//! combined report holds the same sections under their subcommand names, so
//! it is exactly the union of the individual outputs.

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::grid::{build_grid_many, region_metrics, MapError, OccupancyGrid, Region};
use crate::metrics::{compute_metrics, group_metrics, segment_totals, MetricsError, ModeTotals};
use crate::output::fixed;
use crate::roads::{classify_trip, per_type_json, per_type_metrics, speed_compliance, RoadError, RoadNetwork};
use crate::segmentation::{segment_signal, Segmentation, SegmentationError};
use crate::spectrum::{compare_modes, trip_uptime, Spectrum, SpectrumError};
use crate::synth::GroundTruth;
use crate::telemetry::DriveLog;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Roads(#[from] RoadError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("log `{log}`: {source}")]
    Log { log: String, source: AnalysisError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// A parsed log and the name it is reported under.
#[derive(Debug, Clone)]
pub struct LogInput {
    pub id: String,
    pub log: DriveLog,
}

impl LogInput {
    /// Uses the log's own id when present, else `fallback_id`.
    pub fn new(log: DriveLog, fallback_id: &str) -> LogInput {
        LogInput { id: log.log_id.clone().unwrap_or_else(|| fallback_id.to_string()), log }
    }
}

/// Stable sort by reported id; all aggregation follows this order.
pub fn sort_inputs(inputs: &mut [LogInput]) {
    inputs.sort_by(|a, b| a.id.cmp(&b.id));
}

/// Applies `f` to every input, optionally in parallel. Results keep input
/// order and the first failing input (in that order) wins.
fn each_log<T: Send>(
    cfg: &RunConfig,
    inputs: &[LogInput],
    f: impl Fn(&LogInput) -> Result<T, AnalysisError> + Sync,
) -> Result<Vec<T>, ReportError> {
    let run = |i: &LogInput| f(i).map_err(|source| ReportError::Log { log: i.id.clone(), source });
    let results: Vec<Result<T, ReportError>> =
        if cfg.parallel { inputs.par_iter().map(run).collect() } else { inputs.iter().map(run).collect() };
    results.into_iter().collect()
}

pub fn segment_log(cfg: &RunConfig, log: &DriveLog) -> Result<Segmentation, SegmentationError> {
    segment_signal(&log.engagement, cfg.min_dwell)
}

/// Per-log mode totals under the configured distance method.
pub fn log_totals(cfg: &RunConfig, inputs: &[LogInput]) -> Result<Vec<ModeTotals>, ReportError> {
    let method = cfg.distance_method()?;
    each_log(cfg, inputs, |i| {
        let mut seg = segment_log(cfg, &i.log)?;
        Ok(segment_totals(&i.log, &mut seg, method.as_ref())?)
    })
}

/// `{"config": ..}` followed by the entries of `section`.
pub fn with_config(cfg: &RunConfig, section: Value) -> Value {
    let mut out = Map::new();
    out.insert("config".into(), cfg.to_json());
    if let Value::Object(m) = section {
        out.extend(m);
    }
    Value::Object(out)
}

/// Per-log, per-group and overall metrics reports.
pub fn metrics_section(cfg: &RunConfig, inputs: &[LogInput]) -> Result<Value, ReportError> {
    let grouping = cfg.grouping()?;
    let totals = log_totals(cfg, inputs)?;
    let logs: Vec<Value> = inputs.iter().zip(&totals).map(|(i, t)| compute_metrics(*t, i.id.as_str()).to_json()).collect();
    let groups = group_metrics(inputs.iter().zip(&totals).map(|(i, t)| (&i.log, i.id.as_str(), *t)), grouping.as_ref())
        .map_err(AnalysisError::from)?;
    let overall = compute_metrics(totals.iter().copied().sum(), "overall");
    Ok(json!({
        "logs": logs,
        "groups": groups.iter().map(|g| g.to_json()).collect::<Vec<_>>(),
        "overall": overall.to_json(),
    }))
}

/// Intervention grid over all inputs, plus region metrics when a region
/// is given.
pub fn map_section(
    cfg: &RunConfig,
    inputs: &[LogInput],
    region: Option<&Region>,
) -> Result<(OccupancyGrid, Value), ReportError> {
    let mode = cfg.count_mode()?;
    let logs: Vec<&DriveLog> = inputs.iter().map(|i| &i.log).collect();
    let grid = build_grid_many(&logs, cfg.grid_spec(), mode.as_ref(), cfg.parallel).map_err(AnalysisError::from)?;
    let mut section = json!({ "grid": grid.to_json() });
    if let Some(region) = region {
        let method = cfg.distance_method()?;
        let reports = each_log(cfg, inputs, |i| {
            let seg = segment_log(cfg, &i.log)?;
            Ok(region_metrics(&i.log, &seg, region, method.as_ref())?)
        })?;
        let overall = compute_metrics(reports.iter().map(|r| r.totals).sum(), "region");
        let logs: Vec<Value> =
            inputs.iter().zip(&reports).map(|(i, r)| json!({ "log_id": i.id, "report": r.to_json() })).collect();
        section["region"] = json!({ "logs": logs, "overall": overall.to_json() });
    }
    Ok((grid, section))
}

/// Road composition, per-type metrics and speed-limit compliance per log.
/// Compliance is null for logs without measured speeds.
pub fn roads_section(cfg: &RunConfig, inputs: &[LogInput], network: &RoadNetwork) -> Result<Value, ReportError> {
    let method = cfg.distance_method()?;
    let tol = cfg.match_tolerance;
    let logs = each_log(cfg, inputs, |i| {
        let seg = segment_log(cfg, &i.log)?;
        let composition = classify_trip(&i.log, network, tol)?;
        let per_type = per_type_metrics(&i.log, &seg, network, tol, method.as_ref())?;
        let compliance = match speed_compliance(&i.log, network, tol) {
            Ok(c) => c.to_json(),
            Err(RoadError::NoSpeeds) => Value::Null,
            Err(e) => return Err(e.into()),
        };
        Ok(json!({
            "log_id": i.id,
            "composition": composition.to_json(),
            "per_type": per_type_json(&per_type),
            "compliance": compliance,
        }))
    })?;
    Ok(json!({ "logs": logs }))
}

pub fn spectrum_json(s: &Spectrum) -> Value {
    json!({
        "resolution": fixed(s.resolution),
        "n": s.n,
        "freq_hz": (0..s.magnitudes.len()).map(|k| fixed(s.frequency(k))).collect::<Vec<_>>(),
        "magnitude": s.magnitudes.iter().map(|m| fixed(*m)).collect::<Vec<_>>(),
    })
}

/// Auto and manual spectra of one log on the configured channel.
pub fn log_spectra(cfg: &RunConfig, log: &DriveLog) -> Result<(Spectrum, Spectrum), ReportError> {
    let window = cfg.window()?;
    let channel = cfg.channel()?;
    let seg = segment_log(cfg, log).map_err(AnalysisError::from)?;
    Ok(compare_modes(log, &seg, channel, cfg.resample_rate, window.as_ref()).map_err(AnalysisError::from)?)
}

/// Mode spectra and trip time per log. A log lacking data for one mode is
/// reported with an `error` entry instead of failing the whole section.
pub fn spectrum_section(cfg: &RunConfig, inputs: &[LogInput]) -> Result<Value, ReportError> {
    let window = cfg.window()?;
    let channel = cfg.channel()?;
    let logs = each_log(cfg, inputs, |i| {
        let seg = segment_log(cfg, &i.log)?;
        let uptime = trip_uptime(&i.log)?;
        let mut entry = json!({ "log_id": i.id, "trip_uptime": fixed(uptime) });
        match compare_modes(&i.log, &seg, channel, cfg.resample_rate, window.as_ref()) {
            Ok((auto, manual)) => {
                entry["auto"] = spectrum_json(&auto);
                entry["manual"] = spectrum_json(&manual);
            }
            Err(e @ SpectrumError::InsufficientModeData { .. }) => entry["error"] = json!(e.to_string()),
            Err(e) => return Err(e.into()),
        }
        Ok(entry)
    })?;
    Ok(json!({ "channel": channel.name(), "logs": logs }))
}

/// Everything that applies to a set of logs, one section per subcommand.
pub fn full_report(
    cfg: &RunConfig,
    inputs: &[LogInput],
    network: Option<&RoadNetwork>,
    region: Option<&Region>,
) -> Result<Value, ReportError> {
    let mut out = Map::new();
    out.insert("config".into(), cfg.to_json());
    out.insert("metrics".into(), metrics_section(cfg, inputs)?);
    out.insert("map".into(), map_section(cfg, inputs, region)?.1);
    if let Some(net) = network {
        out.insert("roads".into(), roads_section(cfg, inputs, net)?);
    }
    out.insert("spectrum".into(), spectrum_section(cfg, inputs)?);
    Ok(Value::Object(out))
}

pub fn synth_truth_json(log_id: &str, truth: &GroundTruth) -> Value {
    let mut out = Map::new();
    out.insert("log_id".into(), json!(log_id));
    if let Value::Object(m) = truth.to_json(log_id) {
        out.extend(m);
    }
    Value::Object(out)
}
