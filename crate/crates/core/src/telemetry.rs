//! In-memory representation of a recorded drive and its structural checks.
//!
//! Every channel holds timestamped samples in Unix seconds. Samples are plain
//! values; a [`DriveLog`] is never mutated by the analysis code.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Unix epoch time in seconds.
pub type Timestamp = f64;

/// Default tolerance on `|q|² - 1` for pose orientations.
pub const DEFAULT_QUATERNION_TOLERANCE: f64 = 1e-6;

/// Vehicle pose in the local map frame. `q0` is the scalar part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub t: Timestamp,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Pose {
    /// Pose with identity orientation.
    pub fn at(t: Timestamp, x: f64, y: f64, z: f64) -> Self {
        Pose { t, x, y, z, q0: 1.0, q1: 0.0, q2: 0.0, q3: 0.0 }
    }

    pub fn quaternion_norm_sq(&self) -> f64 {
        self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        let dz = other.z - self.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// GNSS fix. Altitude is in feet, as recorded by the logger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub t: Timestamp,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: Timestamp,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedKind {
    Measured,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub t: Timestamp,
    pub v: f64,
    pub kind: SpeedKind,
}

impl SpeedSample {
    pub fn measured(t: Timestamp, v: f64) -> Self {
        SpeedSample { t, v, kind: SpeedKind::Measured }
    }

    pub fn target(t: Timestamp, v: f64) -> Self {
        SpeedSample { t, v, kind: SpeedKind::Target }
    }
}

/// Drive-by-wire state. `enabled == false` means a human is driving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementSample {
    pub t: Timestamp,
    pub enabled: bool,
}

impl EngagementSample {
    pub fn new(t: Timestamp, enabled: bool) -> Self {
        EngagementSample { t, enabled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorChannel {
    Acceleration,
    Brake,
    Steering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSample {
    pub t: Timestamp,
    pub channel: ActuatorChannel,
    pub value: f64,
}

impl ActuatorSample {
    pub fn new(t: Timestamp, channel: ActuatorChannel, value: f64) -> Self {
        ActuatorSample { t, channel, value }
    }
}

/// One recorded trip or session of a single vehicle.
///
/// `speeds` interleaves measured and target samples and `actuators` interleaves
/// the three control channels. Both are kept ordered by timestamp, with ties
/// ordered by kind (measured before target; acceleration, brake, steering).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveLog {
    pub log_id: Option<String>,
    pub vehicle_id: Option<String>,
    pub driver_id: Option<String>,
    pub notes: Vec<String>,
    pub poses: Vec<Pose>,
    pub gps: Vec<GpsFix>,
    pub imu: Vec<ImuSample>,
    pub speeds: Vec<SpeedSample>,
    pub engagement: Vec<EngagementSample>,
    pub actuators: Vec<ActuatorSample>,
}

impl DriveLog {
    pub fn measured_speeds(&self) -> impl Iterator<Item = &SpeedSample> + '_ {
        self.speeds.iter().filter(|s| s.kind == SpeedKind::Measured)
    }

    pub fn actuator(&self, channel: ActuatorChannel) -> impl Iterator<Item = &ActuatorSample> + '_ {
        self.actuators.iter().filter(move |s| s.channel == channel)
    }

    /// Value of the first `route=<name>` note, used for route grouping.
    pub fn route(&self) -> Option<&str> {
        self.notes.iter().find_map(|n| n.strip_prefix("route="))
    }

    /// Earliest timestamp over all channels.
    pub fn start_time(&self) -> Option<Timestamp> {
        self.all_timestamps().min_by(f64::total_cmp)
    }

    fn all_timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.poses
            .iter()
            .map(|s| s.t)
            .chain(self.gps.iter().map(|s| s.t))
            .chain(self.imu.iter().map(|s| s.t))
            .chain(self.speeds.iter().map(|s| s.t))
            .chain(self.engagement.iter().map(|s| s.t))
            .chain(self.actuators.iter().map(|s| s.t))
    }

    /// Returns a copy with every timestamp mapped through `f`.
    pub fn map_times(&self, f: impl Fn(Timestamp) -> Timestamp) -> DriveLog {
        let mut out = self.clone();
        out.poses.iter_mut().for_each(|s| s.t = f(s.t));
        out.gps.iter_mut().for_each(|s| s.t = f(s.t));
        out.imu.iter_mut().for_each(|s| s.t = f(s.t));
        out.speeds.iter_mut().for_each(|s| s.t = f(s.t));
        out.engagement.iter_mut().for_each(|s| s.t = f(s.t));
        out.actuators.iter_mut().for_each(|s| s.t = f(s.t));
        out
    }
}

/// Index of the sample nearest in time to `t`, for a channel sorted by time.
/// Ties go to the earlier sample.
pub fn nearest_index<T>(samples: &[T], t: Timestamp, time_of: impl Fn(&T) -> Timestamp) -> Option<usize> {
    if samples.is_empty() {
        return None;
    }
    let after = samples.partition_point(|s| time_of(s) < t);
    if after == 0 {
        return Some(0);
    }
    if after == samples.len() {
        return Some(samples.len() - 1);
    }
    let before = after - 1;
    if t - time_of(&samples[before]) <= time_of(&samples[after]) - t {
        Some(before)
    } else {
        Some(after)
    }
}

/// Logical channel of a drive log, as named in the text format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Meta,
    Poses,
    Gps,
    Imu,
    Speed,
    TargetSpeed,
    Engagement,
    Accel,
    Brake,
    Steering,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Meta => "meta",
            Channel::Poses => "poses",
            Channel::Gps => "gps",
            Channel::Imu => "imu",
            Channel::Speed => "speed",
            Channel::TargetSpeed => "target_speed",
            Channel::Engagement => "engagement",
            Channel::Accel => "accel",
            Channel::Brake => "brake",
            Channel::Steering => "steering",
        }
    }

    pub fn of_speed(kind: SpeedKind) -> Channel {
        match kind {
            SpeedKind::Measured => Channel::Speed,
            SpeedKind::Target => Channel::TargetSpeed,
        }
    }

    pub fn of_actuator(channel: ActuatorChannel) -> Channel {
        match channel {
            ActuatorChannel::Acceleration => Channel::Accel,
            ActuatorChannel::Brake => Channel::Brake,
            ActuatorChannel::Steering => Channel::Steering,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Timestamp is not finite or is negative.
    ValidTimestamp,
    StrictlyIncreasing,
    UnitQuaternion,
    FiniteValue,
    LatitudeRange,
    LongitudeRange,
    NonNegativeSpeed,
    UnitInterval,
    /// Interleaved channels (speeds, actuators) must be ordered by time then kind.
    InterleaveOrder,
    /// Metadata text may not contain line breaks.
    SingleLineText,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::ValidTimestamp => "valid-timestamp",
            Rule::StrictlyIncreasing => "strictly-increasing",
            Rule::UnitQuaternion => "unit-quaternion",
            Rule::FiniteValue => "finite-value",
            Rule::LatitudeRange => "latitude-range",
            Rule::LongitudeRange => "longitude-range",
            Rule::NonNegativeSpeed => "non-negative-speed",
            Rule::UnitInterval => "unit-interval",
            Rule::InterleaveOrder => "interleave-order",
            Rule::SingleLineText => "single-line-text",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub channel: Channel,
    /// Index within the log's vector for that channel.
    pub index: usize,
    pub rule: Rule,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.channel, self.index, self.rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub quaternion_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { quaternion_tolerance: DEFAULT_QUATERNION_TOLERANCE }
    }
}

/// Checks every structural invariant of `log` with default options.
pub fn validate_log(log: &DriveLog) -> Vec<ValidationIssue> {
    validate_log_with(log, &ValidationOptions::default())
}

pub fn validate_log_with(log: &DriveLog, opts: &ValidationOptions) -> Vec<ValidationIssue> {
    let mut v = Validator { issues: Vec::new() };

    for (i, text) in [&log.log_id, &log.vehicle_id, &log.driver_id]
        .into_iter()
        .flatten()
        .chain(log.notes.iter())
        .enumerate()
    {
        if text.contains(['\n', '\r']) {
            v.push(Channel::Meta, i, Rule::SingleLineText);
        }
    }

    let mut prev = None;
    for (i, p) in log.poses.iter().enumerate() {
        v.timestamp(Channel::Poses, i, p.t, &mut prev);
        if ![p.x, p.y, p.z, p.q0, p.q1, p.q2, p.q3].iter().all(|c| c.is_finite()) {
            v.push(Channel::Poses, i, Rule::FiniteValue);
        } else if (p.quaternion_norm_sq() - 1.0).abs() > opts.quaternion_tolerance {
            v.push(Channel::Poses, i, Rule::UnitQuaternion);
        }
    }

    let mut prev = None;
    for (i, g) in log.gps.iter().enumerate() {
        v.timestamp(Channel::Gps, i, g.t, &mut prev);
        if !(g.latitude.is_finite() && g.longitude.is_finite() && g.altitude.is_finite()) {
            v.push(Channel::Gps, i, Rule::FiniteValue);
            continue;
        }
        if !(-90.0..=90.0).contains(&g.latitude) {
            v.push(Channel::Gps, i, Rule::LatitudeRange);
        }
        if !(-180.0..=180.0).contains(&g.longitude) {
            v.push(Channel::Gps, i, Rule::LongitudeRange);
        }
    }

    let mut prev = None;
    for (i, s) in log.imu.iter().enumerate() {
        v.timestamp(Channel::Imu, i, s.t, &mut prev);
        if ![s.ax, s.ay, s.az, s.wx, s.wy, s.wz].iter().all(|c| c.is_finite()) {
            v.push(Channel::Imu, i, Rule::FiniteValue);
        }
    }

    let mut prev_measured = None;
    let mut prev_target = None;
    for (i, s) in log.speeds.iter().enumerate() {
        let channel = Channel::of_speed(s.kind);
        let prev = match s.kind {
            SpeedKind::Measured => &mut prev_measured,
            SpeedKind::Target => &mut prev_target,
        };
        v.timestamp(channel, i, s.t, prev);
        if !s.v.is_finite() {
            v.push(channel, i, Rule::FiniteValue);
        } else if s.kind == SpeedKind::Measured && s.v < 0.0 {
            v.push(channel, i, Rule::NonNegativeSpeed);
        }
        if i > 0 && interleave_key(&log.speeds[i - 1]) > interleave_key(s) {
            v.push(channel, i, Rule::InterleaveOrder);
        }
    }

    let mut prev = None;
    for (i, e) in log.engagement.iter().enumerate() {
        v.timestamp(Channel::Engagement, i, e.t, &mut prev);
    }

    let mut prevs = [None, None, None];
    for (i, a) in log.actuators.iter().enumerate() {
        let channel = Channel::of_actuator(a.channel);
        v.timestamp(channel, i, a.t, &mut prevs[a.channel as usize]);
        if !a.value.is_finite() {
            v.push(channel, i, Rule::FiniteValue);
        } else if a.channel != ActuatorChannel::Steering && !(0.0..=1.0).contains(&a.value) {
            v.push(channel, i, Rule::UnitInterval);
        }
        if i > 0 && actuator_key(&log.actuators[i - 1]) > actuator_key(a) {
            v.push(channel, i, Rule::InterleaveOrder);
        }
    }

    v.issues
}

fn interleave_key(s: &SpeedSample) -> (OrdF64, SpeedKind) {
    (OrdF64(s.t), s.kind)
}

fn actuator_key(s: &ActuatorSample) -> (OrdF64, ActuatorChannel) {
    (OrdF64(s.t), s.channel)
}

#[derive(PartialEq, PartialOrd)]
struct OrdF64(f64);

struct Validator {
    issues: Vec<ValidationIssue>,
}

impl Validator {
    fn push(&mut self, channel: Channel, index: usize, rule: Rule) {
        self.issues.push(ValidationIssue { channel, index, rule });
    }

    fn timestamp(&mut self, channel: Channel, index: usize, t: f64, prev: &mut Option<f64>) {
        if !t.is_finite() || t < 0.0 {
            self.push(channel, index, Rule::ValidTimestamp);
            return;
        }
        if let Some(p) = *prev {
            if t <= p {
                self.push(channel, index, Rule::StrictlyIncreasing);
            }
        }
        *prev = Some(t);
    }
}
