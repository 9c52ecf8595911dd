use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use avbench_core::config::{ConfigError, RunConfig};
use avbench_core::grid::{export_csv, export_pgm, Region};
use avbench_core::ingest::{parse_csv_bundle, read_log_file, serialize_log, IngestError, RecordKind};
use avbench_core::output::to_json_string;
use avbench_core::report::{
    full_report, log_spectra, map_section, metrics_section, roads_section, sort_inputs, synth_truth_json, with_config,
    LogInput, ReportError,
};
use avbench_core::roads::{load_network, RoadNetwork};
use avbench_core::synth::{synth_log, SynthScenario};
use avbench_core::telemetry::{validate_log, DriveLog};

/// Intervention metrics, maps and control spectra for drive logs.
///
/// A log is either a line-format file or a directory of per-channel CSV
/// files named after their record kind (pose.csv, engage.csv, ...).
#[derive(Parser, Debug)]
#[command(name = "avbench", version)]
struct Cli {
    #[command(flatten)]
    flags: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the run configuration; each beats the config file.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// TOML file with any of the configuration keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registered distance method (path, speed).
    #[arg(long, global = true)]
    distance_method: Option<String>,
    /// Engagement changes shorter than this many seconds are ignored.
    #[arg(long, global = true)]
    min_dwell: Option<f64>,
    /// Grid cell edge in metres.
    #[arg(long, global = true)]
    cell_size: Option<f64>,
    /// Grid origin as `x,y`.
    #[arg(long, global = true, value_parser = parse_origin, allow_hyphen_values = true)]
    origin: Option<[f64; 2]>,
    /// Registered count mode (sample, edge).
    #[arg(long, global = true)]
    count_mode: Option<String>,
    /// Road matching distance in metres.
    #[arg(long, global = true)]
    match_tolerance: Option<f64>,
    /// Spectrum resample rate in Hz.
    #[arg(long, global = true)]
    rate: Option<f64>,
    /// Registered window (rect, hann).
    #[arg(long, global = true)]
    window: Option<String>,
    /// Registered grouping (log, route, period:<name=start..end,...>).
    #[arg(long, global = true)]
    group_by: Option<String>,
    /// Spectrum channel (speed, acceleration, brake, steering).
    #[arg(long, global = true)]
    channel: Option<String>,
    /// Process logs one at a time.
    #[arg(long, global = true)]
    no_parallel: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check logs and list every issue.
    Validate { logs: Vec<PathBuf> },
    /// Per-log, per-group and overall interval metrics.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Intervention grid as CSV, PGM and JSON in the output directory.
    Map {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Polygon file; adds metrics restricted to the region.
        #[arg(long)]
        region: Option<PathBuf>,
    },
    /// Road composition, per-type metrics and speed compliance.
    Roads {
        log: PathBuf,
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Autonomous and manual spectra as two CSV files.
    Spectrum {
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic log plus its exact ground truth.
    Synth {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every applicable section in one document.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_origin(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(x)?, num(y)?])
}

/// Failure with its exit status: 1 for invalid input data, 2 for I/O and
/// parse errors.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Display) -> Failure {
        Failure { code: 1, message: message.to_string() }
    }

    fn io(message: impl Display) -> Failure {
        Failure { code: 2, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } | ConfigError::Parse { .. } => Failure::io(e),
            _ => Failure::invalid(e),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Config(c) => c.into(),
            other => Failure::invalid(other),
        }
    }
}

fn in_file(path: &Path, e: impl Display) -> String {
    format!("{}: {e}", path.display())
}

fn build_config(flags: &ConfigFlags) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = &flags.$flag {
                cfg.$field = v.clone();
            })*
        };
    }
    set!(distance_method => distance_method, min_dwell => min_dwell, cell_size => cell_size,
        origin => origin, count_mode => count_mode, match_tolerance => match_tolerance,
        rate => resample_rate, window => window, group_by => group_by, channel => channel);
    if flags.no_parallel {
        cfg.parallel = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fallback_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn parse_any(path: &Path) -> Result<DriveLog, IngestError> {
    if path.is_dir() {
        let bundle: BTreeMap<RecordKind, PathBuf> = RecordKind::ALL
            .iter()
            .map(|&k| (k, path.join(format!("{}.csv", k.name()))))
            .filter(|(_, p)| p.is_file())
            .collect();
        parse_csv_bundle(&bundle)
    } else {
        read_log_file(path)
    }
}

fn ingest_failure(path: &Path, e: IngestError) -> Failure {
    match e {
        IngestError::InvalidLog(_) => Failure::invalid(in_file(path, e)),
        _ => Failure::io(in_file(path, e)),
    }
}

/// Parses and validates one log.
fn load_log(path: &Path) -> Result<LogInput, Failure> {
    let log = parse_any(path).map_err(|e| ingest_failure(path, e))?;
    let issues = validate_log(&log);
    if !issues.is_empty() {
        return Err(ingest_failure(path, IngestError::InvalidLog(issues)));
    }
    Ok(LogInput::new(log, &fallback_id(path)))
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<LogInput>, Failure> {
    let mut inputs = paths.iter().map(|p| load_log(p)).collect::<Result<Vec<_>, _>>()?;
    sort_inputs(&mut inputs);
    Ok(inputs)
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::io(in_file(path, e)))
}

fn load_region(path: Option<&PathBuf>) -> Result<Option<Region>, Failure> {
    path.map(|p| Region::parse(open(p)?).map_err(|e| Failure::io(in_file(p, e)))).transpose()
}

fn load_roads(path: &Path) -> Result<RoadNetwork, Failure> {
    load_network(open(path)?).map_err(|e| Failure::io(in_file(path, e)))
}

/// Writes via a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Failure::io(in_file(path, e));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(in_file(dir, e)))
}

fn emit_json(value: &Value, out: Option<&PathBuf>) -> Result<(), Failure> {
    let text = to_json_string(value);
    match out {
        Some(p) => write_atomic(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = build_config(&cli.flags)?;
    match cli.command {
        Command::Validate { logs } => {
            let mut bad = false;
            for path in &logs {
                let log = parse_any(path).map_err(|e| ingest_failure(path, e))?;
                let issues = validate_log(&log);
                for issue in &issues {
                    println!("{}: {issue}", path.display());
                }
                if issues.is_empty() {
                    println!("{}: ok", path.display());
                }
                bad |= !issues.is_empty();
            }
            if bad {
                return Err(Failure::invalid("validation failed"));
            }
        }
        Command::Metrics { logs, out } => {
            let inputs = load_logs(&logs)?;
            emit_json(&with_config(&cfg, metrics_section(&cfg, &inputs)?), out.as_ref())?;
        }
        Command::Map { logs, out, region } => {
            let inputs = load_logs(&logs)?;
            let region = load_region(region.as_ref())?;
            let (grid, section) = map_section(&cfg, &inputs, region.as_ref())?;
            create_dir(&out)?;
            write_atomic(&out.join("intervention_map.csv"), &export_csv(&grid))?;
            write_atomic(&out.join("intervention_map.pgm"), &export_pgm(&grid))?;
            write_atomic(&out.join("map.json"), &to_json_string(&with_config(&cfg, section)))?;
        }
        Command::Roads { log, network, out } => {
            let inputs = vec![load_log(&log)?];
            let net = load_roads(&network)?;
            emit_json(&with_config(&cfg, roads_section(&cfg, &inputs, &net)?), out.as_ref())?;
        }
        Command::Spectrum { log, out } => {
            let input = load_log(&log)?;
            let (auto, manual) =
                log_spectra(&cfg, &input.log).map_err(|e| Failure::invalid(format!("log `{}`: {e}", input.id)))?;
            create_dir(&out)?;
            write_atomic(&out.join("spectrum_autonomous.csv"), &auto.to_csv())?;
            write_atomic(&out.join("spectrum_manual.csv"), &manual.to_csv())?;
        }
        Command::Synth { scenario, out } => {
            let sc = SynthScenario::parse(open(&scenario)?).map_err(|e| Failure::io(in_file(&scenario, e)))?;
            let (log, truth) = synth_log(&sc).map_err(|e| Failure::invalid(in_file(&scenario, e)))?;
            let text = serialize_log(&log).map_err(|e| Failure::invalid(in_file(&scenario, e)))?;
            let stem = fallback_id(&scenario);
            let id = log.log_id.clone().unwrap_or_else(|| stem.clone());
            create_dir(&out)?;
            write_atomic(&out.join(format!("{stem}.log")), &text)?;
            write_atomic(&out.join(format!("{stem}.truth.json")), &to_json_string(&synth_truth_json(&id, &truth)))?;
        }
        Command::Report { logs, network, region, out } => {
            let inputs = load_logs(&logs)?;
            let net = network.as_deref().map(load_roads).transpose()?;
            let region = load_region(region.as_ref())?;
            emit_json(&full_report(&cfg, &inputs, net.as_ref(), region.as_ref())?, out.as_ref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("avbench: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
