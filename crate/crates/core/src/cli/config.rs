//! Flat `key = value` run configuration.
//!
//! Precedence is built-in defaults, then the config file, then command-line
//! parameters. Keys outside the schema are rejected; known keys that the
//! selected experiment does not read are accepted and dropped.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
pub enum Experiment {
    QuantumSov,
    Otoc,
    MinState,
    ClassicalLyapunov,
    PhaseDiagram,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::QuantumSov => "quantum-sov",
            Experiment::Otoc => "otoc",
            Experiment::MinState => "min-state",
            Experiment::ClassicalLyapunov => "classical-lyapunov",
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::Validate => "validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("{origin}: duplicate key `{key}`")]
    Duplicate { origin: String, key: String },
    #[error("{origin}: cannot parse line `{line}` (expected `key = value`)")]
    Syntax { origin: String, line: String },
    #[error("`{key}` = `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Float { min: f64, max: f64 },
    Int { min: u64, max: u64 },
    Choice(&'static [&'static str]),
}

use Experiment::*;

struct Key {
    name: &'static str,
    kind: Kind,
    used_by: &'static [Experiment],
    help: &'static str,
}

const QUANTUM: &[Experiment] = &[QuantumSov, Otoc, MinState];
const CLASSICAL: &[Experiment] = &[ClassicalLyapunov];
const BENETTIN: &[Experiment] = &[ClassicalLyapunov, PhaseDiagram];
const GRID: &[Experiment] = &[PhaseDiagram];
const ALL: &[Experiment] = &[
    QuantumSov,
    Otoc,
    MinState,
    ClassicalLyapunov,
    PhaseDiagram,
    Validate,
];

const fn float(min: f64, max: f64) -> Kind {
    Kind::Float { min, max }
}

const fn int(min: u64, max: u64) -> Kind {
    Kind::Int { min, max }
}

const SCHEMA: &[Key] = &[
    Key {
        name: "S",
        kind: float(0.5, 64.0),
        used_by: QUANTUM,
        help: "spin length, integer or half-integer",
    },
    Key {
        name: "omega",
        kind: float(1e-6, 100.0),
        used_by: &[QuantumSov, Otoc, MinState, ClassicalLyapunov],
        help: "transverse field Ω",
    },
    Key {
        name: "gamma",
        kind: float(0.0, 100.0),
        used_by: &[QuantumSov, Otoc, MinState, ClassicalLyapunov],
        help: "noise strength γ",
    },
    Key {
        name: "obs_x",
        kind: float(-1e6, 1e6),
        used_by: QUANTUM,
        help: "Sx coefficient of the observable",
    },
    Key {
        name: "obs_y",
        kind: float(-1e6, 1e6),
        used_by: QUANTUM,
        help: "Sy coefficient of the observable",
    },
    Key {
        name: "obs_z",
        kind: float(-1e6, 1e6),
        used_by: QUANTUM,
        help: "Sz coefficient of the observable",
    },
    Key {
        name: "t_min",
        kind: float(1e-9, 1e6),
        used_by: &[QuantumSov],
        help: "first sample time on a log grid",
    },
    Key {
        name: "t_max",
        kind: float(1e-9, 1e6),
        used_by: &[QuantumSov, Otoc, MinState, ClassicalLyapunov, PhaseDiagram],
        help: "final time (Benettin measurement time for classical runs)",
    },
    Key {
        name: "n_times",
        kind: int(2, 1_000_000),
        used_by: &[QuantumSov, Otoc],
        help: "number of sample times",
    },
    Key {
        name: "grid",
        kind: Kind::Choice(&["log", "linear"]),
        used_by: &[QuantumSov],
        help: "sample-time spacing",
    },
    Key {
        name: "normalization",
        kind: Kind::Choice(&["per_dim", "unnormalized"]),
        used_by: &[Otoc],
        help: "OTOC trace normalization",
    },
    Key {
        name: "conv_tol",
        kind: float(0.0, 1.0),
        used_by: &[QuantumSov, MinState],
        help: "minimum-SOV eigenvector overlap tolerance",
    },
    Key {
        name: "dt",
        kind: float(1e-7, 1.0),
        used_by: BENETTIN,
        help: "SDE time step",
    },
    Key {
        name: "realizations",
        kind: int(1, 10_000_000),
        used_by: BENETTIN,
        help: "Benettin realizations",
    },
    Key {
        name: "x0_q",
        kind: float(-2.0, 2.0),
        used_by: BENETTIN,
        help: "Benettin initial Q",
    },
    Key {
        name: "x0_p",
        kind: float(-2.0, 2.0),
        used_by: BENETTIN,
        help: "Benettin initial P",
    },
    Key {
        name: "delta0",
        kind: float(1e-14, 1e-2),
        used_by: BENETTIN,
        help: "twin separation",
    },
    Key {
        name: "renorm",
        kind: float(1e-7, 1e3),
        used_by: BENETTIN,
        help: "renormalization interval",
    },
    Key {
        name: "transient",
        kind: float(0.0, 1e3),
        used_by: BENETTIN,
        help: "burn-in before accumulation",
    },
    Key {
        name: "M",
        kind: int(2, 100_000_000),
        used_by: CLASSICAL,
        help: "realizations for the variance estimator",
    },
    Key {
        name: "epsilon0",
        kind: float(1e-12, 1.0),
        used_by: CLASSICAL,
        help: "initial offset from the saddle",
    },
    Key {
        name: "sov_t_max",
        kind: float(1e-6, 1e4),
        used_by: CLASSICAL,
        help: "integration time for the variance estimator",
    },
    Key {
        name: "sample_every",
        kind: int(1, 1_000_000),
        used_by: CLASSICAL,
        help: "steps between variance samples",
    },
    Key {
        name: "window_start",
        kind: float(0.0, 1e4),
        used_by: CLASSICAL,
        help: "variance fit window start",
    },
    Key {
        name: "window_end",
        kind: float(0.0, 1e4),
        used_by: CLASSICAL,
        help: "variance fit window end",
    },
    Key {
        name: "omega_min",
        kind: float(1e-6, 100.0),
        used_by: GRID,
        help: "first Ω",
    },
    Key {
        name: "omega_max",
        kind: float(1e-6, 100.0),
        used_by: GRID,
        help: "last Ω",
    },
    Key {
        name: "omega_n",
        kind: int(1, 100_000),
        used_by: GRID,
        help: "Ω grid points",
    },
    Key {
        name: "gamma_min",
        kind: float(0.0, 100.0),
        used_by: GRID,
        help: "first γ",
    },
    Key {
        name: "gamma_max",
        kind: float(0.0, 100.0),
        used_by: GRID,
        help: "last γ",
    },
    Key {
        name: "gamma_n",
        kind: int(1, 100_000),
        used_by: GRID,
        help: "γ grid points",
    },
    Key {
        name: "seed",
        kind: int(0, u64::MAX),
        used_by: ALL,
        help: "base seed",
    },
];

fn key_spec(name: &str) -> Option<&'static Key> {
    SCHEMA.iter().find(|k| k.name == name)
}

fn default_value(exp: Experiment, key: &str) -> &'static str {
    match (key, exp) {
        ("S", _) => "20",
        ("omega", _) => "1",
        ("gamma", _) => "2",
        ("obs_x" | "obs_y" | "obs_z", _) => "0.5773502691896258",
        ("t_min", _) => "0.001",
        ("t_max", QuantumSov) => "5",
        ("t_max", Otoc) => "2",
        ("t_max", MinState) => "10",
        ("t_max", _) => "20",
        ("n_times", _) => "200",
        ("grid", _) => "log",
        ("normalization", _) => "per_dim",
        ("conv_tol", _) => "1e-6",
        ("dt", _) => "0.001",
        ("realizations", PhaseDiagram) => "100",
        ("realizations", _) => "200",
        ("x0_q" | "x0_p", _) => "0",
        ("delta0", _) => "1e-8",
        ("renorm", _) => "0.5",
        ("transient", _) => "2",
        ("M", _) => "1000",
        ("epsilon0", _) => "0.001",
        ("sov_t_max", _) => "10",
        ("sample_every", _) => "250",
        ("window_start", _) => "2",
        ("window_end", _) => "8",
        ("omega_min", _) => "0.1",
        ("omega_max", _) => "4",
        ("omega_n", _) => "40",
        ("gamma_min", _) => "0",
        ("gamma_max", _) => "2.9",
        ("gamma_n", _) => "30",
        ("seed", _) => "0",
        _ => unreachable!("every schema key has a default"),
    }
}

fn check_value(key: &Key, value: &str) -> Result<(), ConfigError> {
    let bad = |reason: String| ConfigError::BadValue {
        key: key.name.into(),
        value: value.into(),
        reason,
    };
    match key.kind {
        Kind::Float { min, max } => {
            let v: f64 = value.parse().map_err(|_| bad("not a number".into()))?;
            if !(v >= min && v <= max) {
                return Err(bad(format!("must lie in [{min}, {max}]")));
            }
        }
        Kind::Int { min, max } => {
            let v: u64 = value
                .parse()
                .map_err(|_| bad("not a non-negative integer".into()))?;
            if v < min || v > max {
                return Err(bad(format!("must lie in [{min}, {max}]")));
            }
        }
        Kind::Choice(options) => {
            if !options.contains(&value) {
                return Err(bad(format!("must be one of {}", options.join(", "))));
            }
        }
    }
    Ok(())
}

/// One layer of raw `key = value` assignments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignments {
    pairs: Vec<(String, String)>,
}

impl Assignments {
    pub fn push(&mut self, key: &str, value: &str) {
        self.pairs
            .push((key.trim().to_string(), value.trim().to_string()));
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.into(),
                line: raw.into(),
            })?;
            let k = k.trim();
            if out.pairs.iter().any(|(key, _)| key == k) {
                return Err(ConfigError::Duplicate {
                    origin: origin.into(),
                    key: k.into(),
                });
            }
            out.push(k, v);
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Fully resolved configuration for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let values = SCHEMA
            .iter()
            .filter(|k| k.used_by.contains(&experiment))
            .map(|k| (k.name, default_value(experiment, k.name).to_string()))
            .collect();
        Self { experiment, values }
    }

    /// Applies layers in order; later layers win.
    pub fn resolve(experiment: Experiment, layers: &[Assignments]) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(experiment);
        for layer in layers {
            for (k, v) in &layer.pairs {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let spec = key_spec(key).ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
        check_value(spec, value)?;
        if spec.used_by.contains(&self.experiment) {
            self.values.insert(spec.name, value.to_string());
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.has("S") {
            let s = self.float("S");
            if (2.0 * s).fract() != 0.0 {
                return invalid("S must be an integer or half-integer");
            }
        }
        if self.has("obs_x")
            && self.float("obs_x") == 0.0
            && self.float("obs_y") == 0.0
            && self.float("obs_z") == 0.0
        {
            return invalid("the observable coefficients are all zero");
        }
        if self.has("t_min") && self.float("t_min") >= self.float("t_max") {
            return invalid("t_min must be smaller than t_max");
        }
        if self.has("window_start") && self.float("window_start") >= self.float("window_end") {
            return invalid("window_start must be smaller than window_end");
        }
        if self.has("window_end") && self.float("window_end") > self.float("sov_t_max") {
            return invalid("the variance fit window must end before sov_t_max");
        }
        if self.has("renorm") && self.float("renorm") < self.float("dt") {
            return invalid("renorm must be at least dt");
        }
        if self.has("omega_min") && self.float("omega_min") > self.float("omega_max") {
            return invalid("omega_min exceeds omega_max");
        }
        if self.has("gamma_min") && self.float("gamma_min") > self.float("gamma_max") {
            return invalid("gamma_min exceeds gamma_max");
        }
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| {
            panic!(
                "`{key}` is not part of the {} configuration",
                self.experiment
            )
        })
    }

    pub fn float(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated on insertion")
    }

    pub fn int(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated on insertion")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn seed(&self) -> u64 {
        self.int("seed")
    }

    /// Resolved `(key, value)` pairs in key order.
    pub fn entries(&self) -> &BTreeMap<&'static str, String> {
        &self.values
    }
}

/// Schema listing for `--help`.
pub fn schema_help() -> String {
    let mut out =
        String::from("Configuration keys (file lines `key = value` or flags `--key value`):\n");
    for k in SCHEMA {
        let used: Vec<&str> = k.used_by.iter().map(|e| e.name()).collect();
        out.push_str(&format!(
            "  {:<14} {} [{}]\n",
            k.name,
            k.help,
            used.join(", ")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_figure_parameters() {
        let c = RunConfig::defaults(QuantumSov);
        assert_eq!(c.float("S"), 20.0);
        assert_eq!(c.float("gamma"), 2.0);
        assert_eq!(c.float("omega"), 1.0);
        assert!((c.float("obs_x") - 1.0 / 3f64.sqrt()).abs() < 1e-16);
        assert!(!c.has("realizations"));
    }

    #[test]
    fn later_layers_override() {
        let file = Assignments::parse("gamma = 1.5\n# comment\nS = 3  # trailing\n", "f").unwrap();
        let mut flags = Assignments::default();
        flags.push("gamma", "0.5");
        let c = RunConfig::resolve(QuantumSov, &[file, flags]).unwrap();
        assert_eq!(c.float("gamma"), 0.5);
        assert_eq!(c.float("S"), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        let unknown = Assignments::parse("gama = 1", "f").unwrap();
        assert!(matches!(
            RunConfig::resolve(Otoc, &[unknown]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            Assignments::parse("gamma 1", "f"),
            Err(ConfigError::Syntax { .. })
        ));
        assert!(matches!(
            Assignments::parse("S=1\nS=2", "f"),
            Err(ConfigError::Duplicate { .. })
        ));
        let neg = Assignments::parse("gamma = -1", "f").unwrap();
        assert!(matches!(
            RunConfig::resolve(Otoc, &[neg]),
            Err(ConfigError::BadValue { .. })
        ));
        let half = Assignments::parse("S = 1.25", "f").unwrap();
        assert!(matches!(
            RunConfig::resolve(Otoc, &[half]),
            Err(ConfigError::Invalid(_))
        ));
        let choice = Assignments::parse("grid = cubic", "f").unwrap();
        assert!(RunConfig::resolve(QuantumSov, &[choice]).is_err());
    }

    #[test]
    fn unused_known_keys_are_dropped() {
        let a = Assignments::parse("realizations = 5", "f").unwrap();
        let c = RunConfig::resolve(Otoc, &[a]).unwrap();
        assert!(!c.has("realizations"));
    }

    #[test]
    fn every_key_has_a_default() {
        for exp in ALL {
            let c = RunConfig::defaults(*exp);
            c.validate().unwrap();
            assert!(c.has("seed"));
        }
    }
}
