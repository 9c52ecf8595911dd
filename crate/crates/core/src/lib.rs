//! Disengagement and intervention metrics for driving logs.
//!
//! A log is a set of timestamped channels (poses, speeds, engagement state,
//! actuators). The engagement channel is segmented into autonomous and manual
//! spans; distance and time are attributed to those spans and reduced to
//! distance/time between interventions. Alternative algorithms are selected by
//! name through [`registry`].

pub mod config;
pub mod geometry;
pub mod grid;
pub mod ingest;
pub mod metrics;
pub mod output;
pub mod registry;
pub mod report;
pub mod roads;
pub mod segmentation;
pub mod spectrum;
pub mod synth;
pub mod telemetry;
