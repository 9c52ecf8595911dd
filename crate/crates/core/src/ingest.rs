//! Line-oriented drive-log format and CSV bundle import.
//!
//! One record per line, `kind,t,<payload...>`, comma separated with no
//! whitespace. Lines starting with `#` and blank lines are skipped.
//! Numbers are written with Rust's shortest round-trip formatting, so
//! `parse_log(serialize_log(log)) == log` for every valid log.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::telemetry::{
    validate_log, ActuatorChannel, ActuatorSample, Channel, DriveLog, EngagementSample, GpsFix,
    ImuSample, Pose, SpeedKind, SpeedSample, Timestamp, ValidationIssue,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("line {line_no}: timestamp not strictly increasing in channel {channel}")]
    NonMonotonicTimestamp { channel: Channel, line_no: usize },
    #[error("line {line_no}: unknown record kind")]
    UnknownKind { line_no: usize },
    #[error("{kind}: missing column `{column}`")]
    MissingColumn { kind: RecordKind, column: String },
    #[error("log is not valid: {}", join_issues(.0))]
    InvalidLog(Vec<ValidationIssue>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line_no}: {source}")]
    Read {
        line_no: usize,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IngestError {
    /// 1-based line number the error points at, when it has one.
    pub fn line_no(&self) -> Option<usize> {
        match self {
            IngestError::MalformedRecord { line_no, .. }
            | IngestError::NonMonotonicTimestamp { line_no, .. }
            | IngestError::UnknownKind { line_no }
            | IngestError::Read { line_no, .. } => Some(*line_no),
            _ => None,
        }
    }
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

/// Record kinds in serialization tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Meta,
    Pose,
    Gps,
    Imu,
    Speed,
    TargetSpeed,
    Engage,
    Accel,
    Brake,
    Steering,
}

impl RecordKind {
    pub const ALL: [RecordKind; 10] = [
        RecordKind::Meta,
        RecordKind::Pose,
        RecordKind::Gps,
        RecordKind::Imu,
        RecordKind::Speed,
        RecordKind::TargetSpeed,
        RecordKind::Engage,
        RecordKind::Accel,
        RecordKind::Brake,
        RecordKind::Steering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Meta => "meta",
            RecordKind::Pose => "pose",
            RecordKind::Gps => "gps",
            RecordKind::Imu => "imu",
            RecordKind::Speed => "speed",
            RecordKind::TargetSpeed => "target_speed",
            RecordKind::Engage => "engage",
            RecordKind::Accel => "accel",
            RecordKind::Brake => "brake",
            RecordKind::Steering => "steering",
        }
    }

    pub fn from_name(name: &str) -> Option<RecordKind> {
        RecordKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Payload column names following `t`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            RecordKind::Meta => &["key", "value"],
            RecordKind::Pose => &["x", "y", "z", "q0", "q1", "q2", "q3"],
            RecordKind::Gps => &["lat", "lon", "alt_ft"],
            RecordKind::Imu => &["ax", "ay", "az", "wx", "wy", "wz"],
            RecordKind::Speed | RecordKind::TargetSpeed => &["v"],
            RecordKind::Engage => &["enabled"],
            RecordKind::Accel | RecordKind::Brake | RecordKind::Steering => &["value"],
        }
    }

    fn channel(self) -> Channel {
        match self {
            RecordKind::Meta => Channel::Meta,
            RecordKind::Pose => Channel::Poses,
            RecordKind::Gps => Channel::Gps,
            RecordKind::Imu => Channel::Imu,
            RecordKind::Speed => Channel::Speed,
            RecordKind::TargetSpeed => Channel::TargetSpeed,
            RecordKind::Engage => Channel::Engagement,
            RecordKind::Accel => Channel::Accel,
            RecordKind::Brake => Channel::Brake,
            RecordKind::Steering => Channel::Steering,
        }
    }
}

impl std::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Accumulates records into a `DriveLog`, enforcing per-channel ordering.
#[derive(Default)]
struct LogBuilder {
    log: DriveLog,
    last_t: BTreeMap<RecordKind, f64>,
}

impl LogBuilder {
    fn push(&mut self, line_no: usize, kind: RecordKind, t: f64, payload: &[&str]) -> Result<(), IngestError> {
        let malformed = |reason: String| IngestError::MalformedRecord { line_no, reason };
        let expected = kind.columns().len();
        if payload.len() != expected {
            return Err(malformed(format!(
                "{kind} expects {expected} payload field(s), found {}",
                payload.len()
            )));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(malformed(format!("invalid timestamp {t}")));
        }
        if kind != RecordKind::Meta {
            if let Some(&prev) = self.last_t.get(&kind) {
                if t <= prev {
                    return Err(IngestError::NonMonotonicTimestamp { channel: kind.channel(), line_no });
                }
            }
            self.last_t.insert(kind, t);
        }

        let num = |i: usize| parse_num(payload[i], kind.columns()[i]).map_err(malformed);
        let log = &mut self.log;
        match kind {
            RecordKind::Meta => {
                let value = payload[1].to_string();
                let slot = match payload[0] {
                    "log_id" => &mut log.log_id,
                    "vehicle_id" => &mut log.vehicle_id,
                    "driver_id" => &mut log.driver_id,
                    "note" => {
                        log.notes.push(value);
                        return Ok(());
                    }
                    other => return Err(malformed(format!("unknown meta key `{other}`"))),
                };
                if slot.is_some() {
                    return Err(malformed(format!("duplicate meta key `{}`", payload[0])));
                }
                *slot = Some(value);
            }
            RecordKind::Pose => {
                let pose = Pose {
                    t,
                    x: num(0)?,
                    y: num(1)?,
                    z: num(2)?,
                    q0: num(3)?,
                    q1: num(4)?,
                    q2: num(5)?,
                    q3: num(6)?,
                };
                log.poses.push(pose);
            }
            RecordKind::Gps => {
                let fix = GpsFix { t, latitude: num(0)?, longitude: num(1)?, altitude: num(2)? };
                if !(-90.0..=90.0).contains(&fix.latitude) {
                    return Err(malformed("latitude outside [-90, 90]".into()));
                }
                if !(-180.0..=180.0).contains(&fix.longitude) {
                    return Err(malformed("longitude outside [-180, 180]".into()));
                }
                log.gps.push(fix);
            }
            RecordKind::Imu => {
                let s = ImuSample {
                    t,
                    ax: num(0)?,
                    ay: num(1)?,
                    az: num(2)?,
                    wx: num(3)?,
                    wy: num(4)?,
                    wz: num(5)?,
                };
                log.imu.push(s);
            }
            RecordKind::Speed | RecordKind::TargetSpeed => {
                let v = num(0)?;
                let sample = if kind == RecordKind::Speed {
                    if v < 0.0 {
                        return Err(malformed("measured speed is negative".into()));
                    }
                    SpeedSample::measured(t, v)
                } else {
                    SpeedSample::target(t, v)
                };
                log.speeds.push(sample);
            }
            RecordKind::Engage => {
                let enabled = match payload[0] {
                    "0" => false,
                    "1" => true,
                    other => return Err(malformed(format!("engage value must be 0 or 1, got `{other}`"))),
                };
                log.engagement.push(EngagementSample::new(t, enabled));
            }
            RecordKind::Accel | RecordKind::Brake | RecordKind::Steering => {
                let value = num(0)?;
                let channel = match kind {
                    RecordKind::Accel => ActuatorChannel::Acceleration,
                    RecordKind::Brake => ActuatorChannel::Brake,
                    _ => ActuatorChannel::Steering,
                };
                if channel != ActuatorChannel::Steering && !(0.0..=1.0).contains(&value) {
                    return Err(malformed(format!("{kind} value {value} outside [0, 1]")));
                }
                log.actuators.push(ActuatorSample::new(t, channel, value));
            }
        }
        Ok(())
    }

    fn finish(mut self) -> DriveLog {
        // Each sub-channel is already strictly increasing, so a stable sort by
        // (t, kind) gives the unique canonical interleaving.
        self.log.speeds.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.kind.cmp(&b.kind)));
        self.log.actuators.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.channel.cmp(&b.channel)));
        self.log
    }
}

fn parse_num(field: &str, column: &str) -> Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("{column}: `{field}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{column}: `{field}` is not finite"));
    }
    Ok(v)
}

fn parse_time(field: &str) -> Result<Timestamp, String> {
    parse_num(field, "t")
}

/// Parses the canonical line format.
pub fn parse_log<R: Read>(reader: R) -> Result<DriveLog, IngestError> {
    let mut builder = LogBuilder::default();
    let mut line = String::new();
    let mut reader = BufReader::new(reader);
    let mut line_no = 0;
    loop {
        line.clear();
        line_no += 1;
        let n = reader
            .read_line(&mut line)
            .map_err(|source| IngestError::Read { line_no, source })?;
        if n == 0 {
            break;
        }
        let record = line.strip_suffix('\n').unwrap_or(&line);
        let record = record.strip_suffix('\r').unwrap_or(record);
        if record.is_empty() || record.starts_with('#') {
            continue;
        }
        parse_record(&mut builder, line_no, record)?;
    }
    Ok(builder.finish())
}

pub fn parse_log_str(text: &str) -> Result<DriveLog, IngestError> {
    parse_log(text.as_bytes())
}

pub fn read_log_file(path: &Path) -> Result<DriveLog, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
    parse_log(file)
}

fn parse_record(builder: &mut LogBuilder, line_no: usize, record: &str) -> Result<(), IngestError> {
    let (kind_name, rest) = record.split_once(',').unwrap_or((record, ""));
    let kind = RecordKind::from_name(kind_name).ok_or(IngestError::UnknownKind { line_no })?;
    let (t_field, payload) = match rest.split_once(',') {
        Some((t, p)) => (t, p),
        None => (rest, ""),
    };
    if t_field.is_empty() {
        return Err(IngestError::MalformedRecord { line_no, reason: "missing timestamp".into() });
    }
    let t = parse_time(t_field).map_err(|reason| IngestError::MalformedRecord { line_no, reason })?;
    let fields: Vec<&str> = if kind == RecordKind::Meta {
        // The value is free text and may itself contain commas.
        payload.splitn(2, ',').collect()
    } else if payload.is_empty() {
        Vec::new()
    } else {
        payload.split(',').collect()
    };
    builder.push(line_no, kind, t, &fields)
}

/// Serializes a valid log into the canonical line format.
///
/// Records are emitted in timestamp order; ties follow [`RecordKind`] order.
/// Metadata lines are stamped with the log's earliest timestamp (0 when the
/// log has no samples).
pub fn serialize_log(log: &DriveLog) -> Result<String, IngestError> {
    let issues = validate_log(log);
    if !issues.is_empty() {
        return Err(IngestError::InvalidLog(issues));
    }

    let mut records: Vec<(f64, RecordKind, String)> = Vec::new();
    let meta_t = log.start_time().unwrap_or(0.0);
    let metas = [("log_id", &log.log_id), ("vehicle_id", &log.vehicle_id), ("driver_id", &log.driver_id)];
    for (key, value) in metas {
        if let Some(v) = value {
            records.push((meta_t, RecordKind::Meta, format!("{key},{v}")));
        }
    }
    for note in &log.notes {
        records.push((meta_t, RecordKind::Meta, format!("note,{note}")));
    }
    for p in &log.poses {
        let payload = format!("{},{},{},{},{},{},{}", p.x, p.y, p.z, p.q0, p.q1, p.q2, p.q3);
        records.push((p.t, RecordKind::Pose, payload));
    }
    for g in &log.gps {
        records.push((g.t, RecordKind::Gps, format!("{},{},{}", g.latitude, g.longitude, g.altitude)));
    }
    for s in &log.imu {
        let payload = format!("{},{},{},{},{},{}", s.ax, s.ay, s.az, s.wx, s.wy, s.wz);
        records.push((s.t, RecordKind::Imu, payload));
    }
    for s in &log.speeds {
        let kind = match s.kind {
            SpeedKind::Measured => RecordKind::Speed,
            SpeedKind::Target => RecordKind::TargetSpeed,
        };
        records.push((s.t, kind, s.v.to_string()));
    }
    for e in &log.engagement {
        records.push((e.t, RecordKind::Engage, if e.enabled { "1" } else { "0" }.to_string()));
    }
    for a in &log.actuators {
        let kind = match a.channel {
            ActuatorChannel::Acceleration => RecordKind::Accel,
            ActuatorChannel::Brake => RecordKind::Brake,
            ActuatorChannel::Steering => RecordKind::Steering,
        };
        records.push((a.t, kind, a.value.to_string()));
    }
    records.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out = String::new();
    for (t, kind, payload) in records {
        let _ = writeln!(out, "{kind},{t},{payload}");
    }
    Ok(out)
}

/// Parses a set of per-kind CSV tables into a log.
///
/// Each table has a header row whose first column is `t`; payload columns
/// are looked up by name (see [`RecordKind::columns`]). Line numbers in
/// errors refer to lines of the offending table.
pub fn parse_csv_readers<R: Read>(tables: Vec<(RecordKind, R)>) -> Result<DriveLog, IngestError> {
    let mut builder = LogBuilder::default();
    for (kind, reader) in tables {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("t") {
            return Err(IngestError::MissingColumn { kind, column: "t".into() });
        }
        let mut positions = Vec::with_capacity(kind.columns().len());
        for column in kind.columns() {
            let pos = headers
                .iter()
                .position(|h| h.trim() == *column)
                .ok_or_else(|| IngestError::MissingColumn { kind, column: column.to_string() })?;
            positions.push(pos);
        }
        for row in rdr.records() {
            let row = row?;
            let line_no = row.position().map(|p| p.line() as usize).unwrap_or(0);
            let t = parse_time(row.get(0).unwrap_or(""))
                .map_err(|reason| IngestError::MalformedRecord { line_no, reason })?;
            let mut payload = Vec::with_capacity(positions.len());
            for (&pos, column) in positions.iter().zip(kind.columns()) {
                let field = row.get(pos).ok_or_else(|| IngestError::MalformedRecord {
                    line_no,
                    reason: format!("missing field `{column}`"),
                })?;
                payload.push(field);
            }
            builder.push(line_no, kind, t, &payload)?;
        }
    }
    Ok(builder.finish())
}

/// Opens every path in `paths` (kind → CSV file) and parses the bundle.
pub fn parse_csv_bundle(paths: &BTreeMap<RecordKind, PathBuf>) -> Result<DriveLog, IngestError> {
    let mut tables = Vec::with_capacity(paths.len());
    for (&kind, path) in paths {
        let file = File::open(path).map_err(|source| IngestError::Io { path: path.clone(), source })?;
        tables.push((kind, file));
    }
    parse_csv_readers(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_engage_records() {
        let log = parse_log_str("engage,0,1\nengage,5,0\n").unwrap();
        assert_eq!(log.engagement, vec![EngagementSample::new(0.0, true), EngagementSample::new(5.0, false)]);
    }

    #[test]
    fn engage_value_two_is_malformed() {
        let err = parse_log_str("engage,0,2\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line_no: 1, .. }), "{err}");
    }

    #[test]
    fn pose_going_backwards() {
        let text = "pose,1.0,0,0,0,1,0,0,0\npose,0.5,0,0,0,1,0,0,0\n";
        let err = parse_log_str(text).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotonicTimestamp { channel: Channel::Poses, line_no: 2 }));
    }

    #[test]
    fn unknown_kind_and_missing_field() {
        let err = parse_log_str("# header\nlidar,0,1\n").unwrap_err();
        assert!(matches!(err, IngestError::UnknownKind { line_no: 2 }));
        let err = parse_log_str("speed,0,1\nspeed,1\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line_no: 2, .. }));
        let err = parse_log_str("gps,0,1,2\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line_no: 1, .. }));
    }

    #[test]
    fn meta_values_keep_commas() {
        let log = parse_log_str("meta,0,log_id,run-1\nmeta,0,note,wet, windy\n").unwrap();
        assert_eq!(log.log_id.as_deref(), Some("run-1"));
        assert_eq!(log.notes, vec!["wet, windy".to_string()]);
        let err = parse_log_str("meta,0,weather,sunny\n").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRecord { line_no: 1, .. }));
    }

    #[test]
    fn meta_only_log_serializes_to_one_line() {
        let log = DriveLog { log_id: Some("x".into()), ..Default::default() };
        assert_eq!(serialize_log(&log).unwrap(), "meta,0,log_id,x\n");
    }

    #[test]
    fn tie_break_puts_pose_before_engage() {
        let log = DriveLog {
            poses: vec![Pose::at(3.0, 1.0, 2.0, 0.0)],
            engagement: vec![EngagementSample::new(3.0, true)],
            ..Default::default()
        };
        let text = serialize_log(&log).unwrap();
        assert_eq!(text, "pose,3,1,2,0,1,0,0,0\nengage,3,1\n");
    }

    #[test]
    fn serialize_rejects_invalid_log() {
        let log = DriveLog {
            engagement: vec![EngagementSample::new(1.0, true), EngagementSample::new(1.0, false)],
            ..Default::default()
        };
        assert!(matches!(serialize_log(&log), Err(IngestError::InvalidLog(_))));
    }

    #[test]
    fn target_and_measured_speeds_interleave() {
        let log = parse_log_str("target_speed,2,3\nspeed,1,1\nspeed,2,2\n").unwrap();
        let kinds: Vec<_> = log.speeds.iter().map(|s| (s.t, s.kind)).collect();
        assert_eq!(kinds, vec![(1.0, SpeedKind::Measured), (2.0, SpeedKind::Measured), (2.0, SpeedKind::Target)]);
        assert!(validate_log(&log).is_empty());
    }

    #[test]
    fn csv_bundle_matches_text() {
        let text = "meta,0,log_id,b\npose,0,0,0,0,1,0,0,0\nspeed,0,2\nengage,0,1\npose,1,2,0,0,1,0,0,0\nspeed,1,2\nengage,5,0\n";
        let tables: Vec<(RecordKind, &[u8])> = vec![
            (RecordKind::Meta, b"t,key,value\n0,log_id,b\n"),
            (RecordKind::Pose, b"t,x,y,z,q0,q1,q2,q3\n0,0,0,0,1,0,0,0\n1,2,0,0,1,0,0,0\n"),
            (RecordKind::Speed, b"t,v\n0,2\n1,2\n"),
            (RecordKind::Engage, b"t,enabled\n0,1\n5,0\n"),
        ];
        assert_eq!(parse_csv_readers(tables).unwrap(), parse_log_str(text).unwrap());
    }

    #[test]
    fn csv_columns_may_be_reordered() {
        let tables: Vec<(RecordKind, &[u8])> = vec![(RecordKind::Gps, b"t,alt_ft,lon,lat\n0,100,-117.2,32.8\n")];
        let log = parse_csv_readers(tables).unwrap();
        assert_eq!(log.gps[0].latitude, 32.8);
        assert_eq!(log.gps[0].altitude, 100.0);
    }

    #[test]
    fn csv_missing_column() {
        let tables: Vec<(RecordKind, &[u8])> = vec![(RecordKind::Speed, b"t,speed\n0,1\n")];
        let err = parse_csv_readers(tables).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { kind: RecordKind::Speed, ref column } if column == "v"));
    }

    #[test]
    fn csv_error_line_numbers() {
        let tables: Vec<(RecordKind, &[u8])> = vec![(RecordKind::Engage, b"t,enabled\n0,1\n1,1\n2,7\n")];
        let err = parse_csv_readers(tables).unwrap_err();
        assert_eq!(err.line_no(), Some(4));
    }

    proptest! {
        #[test]
        fn shortest_float_formatting_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let back: f64 = x.to_string().parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
