//! Name-keyed registries for the interchangeable strategies.
//!
//! Every family (distance method, grid count mode, spectral window, log
//! grouping) is a trait; each implementation is registered under the name
//! used on the command line and in config files. A selector is either a
//! bare name (`path`) or a name followed by arguments (`period:summer=...`).

use std::collections::BTreeMap;
use std::sync::LazyLock;

use thiserror::Error;

use crate::grid::{CountMode, EdgeCount, SampleCount};
use crate::metrics::{ByLog, ByPeriod, ByRoute, DistanceMethod, Grouping, PathDistance, SpeedDistance};
use crate::spectrum::{Hann, Rect, Window};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown {kind} `{name}` (expected one of: {known})")]
    Unknown { kind: &'static str, name: String, known: String },
    #[error("{kind} `{name}`: {reason}")]
    BadArguments { kind: &'static str, name: String, reason: String },
}

pub type Factory<T> = fn(&str) -> Result<Box<T>, String>;

pub struct Registry<T: ?Sized + 'static> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized + 'static> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, entries: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, selector: &str) -> bool {
        self.entries.contains_key(split_selector(selector).0)
    }

    /// Builds the strategy named by `selector`.
    pub fn create(&self, selector: &str) -> Result<Box<T>, RegistryError> {
        let (name, args) = split_selector(selector);
        let factory = self.entries.get(name).ok_or_else(|| RegistryError::Unknown {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(args).map_err(|reason| RegistryError::BadArguments { kind: self.kind, name: name.to_string(), reason })
    }
}

fn split_selector(selector: &str) -> (&str, &str) {
    selector.split_once(':').unwrap_or((selector, ""))
}

fn no_args<S: 'static>(args: &str, make: impl FnOnce() -> S) -> Result<S, String> {
    if args.is_empty() {
        Ok(make())
    } else {
        Err(format!("takes no arguments, got `{args}`"))
    }
}

static DISTANCE_METHODS: LazyLock<Registry<dyn DistanceMethod>> = LazyLock::new(|| {
    let mut r = Registry::<dyn DistanceMethod>::new("distance method");
    r.register("path", |a| no_args(a, || Box::new(PathDistance) as Box<dyn DistanceMethod>));
    r.register("speed", |a| no_args(a, || Box::new(SpeedDistance) as Box<dyn DistanceMethod>));
    r
});

static COUNT_MODES: LazyLock<Registry<dyn CountMode>> = LazyLock::new(|| {
    let mut r = Registry::<dyn CountMode>::new("count mode");
    r.register("sample", |a| no_args(a, || Box::new(SampleCount) as Box<dyn CountMode>));
    r.register("edge", |a| no_args(a, || Box::new(EdgeCount) as Box<dyn CountMode>));
    r
});

static WINDOWS: LazyLock<Registry<dyn Window>> = LazyLock::new(|| {
    let mut r = Registry::<dyn Window>::new("window");
    r.register("rect", |a| no_args(a, || Box::new(Rect) as Box<dyn Window>));
    r.register("hann", |a| no_args(a, || Box::new(Hann) as Box<dyn Window>));
    r
});

static GROUPINGS: LazyLock<Registry<dyn Grouping>> = LazyLock::new(|| {
    let mut r = Registry::<dyn Grouping>::new("grouping");
    r.register("log", |a| no_args(a, || Box::new(ByLog) as Box<dyn Grouping>));
    r.register("route", |a| no_args(a, || Box::new(ByRoute) as Box<dyn Grouping>));
    r.register("period", |a| Ok(Box::new(ByPeriod::parse(a)?) as Box<dyn Grouping>));
    r
});

pub fn distance_methods() -> &'static Registry<dyn DistanceMethod> {
    &DISTANCE_METHODS
}

pub fn count_modes() -> &'static Registry<dyn CountMode> {
    &COUNT_MODES
}

pub fn windows() -> &'static Registry<dyn Window> {
    &WINDOWS
}

pub fn groupings() -> &'static Registry<dyn Grouping> {
    &GROUPINGS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names() {
        assert_eq!(distance_methods().names().collect::<Vec<_>>(), ["path", "speed"]);
        assert_eq!(count_modes().names().collect::<Vec<_>>(), ["edge", "sample"]);
        assert_eq!(windows().names().collect::<Vec<_>>(), ["hann", "rect"]);
        assert_eq!(groupings().names().collect::<Vec<_>>(), ["log", "period", "route"]);
    }

    #[test]
    fn created_strategies_report_their_name() {
        assert_eq!(distance_methods().create("speed").unwrap().name(), "speed");
        assert_eq!(count_modes().create("edge").unwrap().name(), "edge");
        assert_eq!(windows().create("rect").unwrap().name(), "rect");
    }

    #[test]
    fn unknown_and_bad_arguments() {
        let err = distance_methods().create("gps").err().unwrap();
        assert!(matches!(err, RegistryError::Unknown { ref name, .. } if name == "gps"));
        assert!(err.to_string().contains("path, speed"));
        let err = windows().create("hann:0.5").err().unwrap();
        assert!(matches!(err, RegistryError::BadArguments { .. }));
        assert!(groupings().create("period:summer=2019-13-01..2019-09-01").is_err());
        assert!(groupings().create("period:summer=2019-06-01..2019-09-01").is_ok());
    }

    #[test]
    fn custom_registry() {
        trait Greeter: Send + Sync {
            fn greet(&self) -> String;
        }
        struct Plain(String);
        impl Greeter for Plain {
            fn greet(&self) -> String {
                format!("hello {}", self.0)
            }
        }
        let mut r = Registry::<dyn Greeter>::new("greeter");
        r.register("plain", |a| Ok(Box::new(Plain(a.to_string())) as Box<dyn Greeter>));
        assert!(r.contains("plain:x"));
        assert_eq!(r.create("plain:bob").unwrap().greet(), "hello bob");
    }
}
