//! `sovlab` command line.
//!
//! `sovlab <experiment> [--config FILE] [--KEY VALUE ...] [--out DIR]
//! [--format csv|structured] [--threads N] [--seed U64]`

pub mod config;
pub mod emit;
pub mod run;
pub mod validate;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use crate::error::SovError;
use config::{Assignments, ConfigError, Experiment, RunConfig};
use emit::{emit, file_name, Format, ManifestCore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "sovlab",
    version,
    about = "Stochastic operator variance, dissipative OTOCs and Lyapunov exponents"
)]
#[command(after_help = config::schema_help())]
pub struct Args {
    pub experiment: Experiment,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Worker threads; falls back to SOVLAB_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

const FIXED_FLAGS: &[&str] = &[
    "config", "out", "format", "threads", "seed", "help", "version",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] SovError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Numerical(SovError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
            CliError::ValidationFailed(_) => EXIT_VALIDATION_FAILED,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Usage(_) => "config",
            CliError::Numerical(SovError::NonConvergence { .. }) => "non_convergence",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::ValidationFailed(_) => "validation",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn structured(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

/// Pulls `--key value` / `--key=value` pairs for configuration keys out of
/// the argument list, leaving the fixed flags for clap.
pub fn split_params(argv: Vec<OsString>) -> Result<(Vec<OsString>, Assignments), CliError> {
    let mut fixed = Vec::with_capacity(argv.len());
    let mut params = Assignments::default();
    let mut it = argv.into_iter();
    if let Some(prog) = it.next() {
        fixed.push(prog);
    }
    while let Some(arg) = it.next() {
        let Some(s) = arg.to_str() else {
            fixed.push(arg);
            continue;
        };
        let Some(flag) = s.strip_prefix("--") else {
            fixed.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        if FIXED_FLAGS.contains(&name) || name.is_empty() {
            fixed.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| CliError::Usage(format!("--{name} needs a value")))?,
        };
        params.push(name, &value);
    }
    Ok((fixed, params))
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("SOVLAB_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!("SOVLAB_THREADS = `{v}` is not a thread count"))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

/// Summary printed on success.
#[derive(Debug, Clone)]
pub struct Completed {
    pub files: Vec<PathBuf>,
    pub report: Option<String>,
}

pub fn execute(args: Args, params: Assignments) -> Result<Completed, CliError> {
    let started = Instant::now();
    let mut layers = Vec::new();
    if let Some(path) = &args.config {
        layers.push(Assignments::from_file(path)?);
    }
    layers.push(params);
    if let Some(seed) = args.seed {
        let mut s = Assignments::default();
        s.push("seed", &seed.to_string());
        layers.push(s);
    }
    let cfg = RunConfig::resolve(args.experiment, &layers)?;
    let threads = thread_count(args.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;

    let (tables, summary, report, failures) = pool.install(|| -> Result<_, CliError> {
        if cfg.experiment == Experiment::Validate {
            let checks = validate::run_checks(cfg.seed())?;
            let failures = checks.iter().filter(|c| !c.passed()).count();
            Ok((
                vec![validate::checks_table(&checks)],
                Default::default(),
                Some(validate::render(&checks)),
                failures,
            ))
        } else {
            let out = run::run_experiment(&cfg)?;
            Ok((out.tables, out.summary, None, 0))
        }
    })?;

    let outputs = tables.iter().map(|t| file_name(t, args.format)).collect();
    let core = ManifestCore::new(&cfg, outputs, summary);
    let files = emit(
        &args.out,
        args.format,
        &tables,
        &core,
        threads,
        started.elapsed().as_secs_f64(),
    )?;
    if let Some(r) = &report {
        print!("{r}");
    }
    if failures > 0 {
        return Err(CliError::ValidationFailed(failures));
    }
    Ok(Completed { files, report })
}

/// Parses `argv`, runs, and returns the process exit code.
pub fn main_with_args(argv: Vec<OsString>) -> i32 {
    let (fixed, params) = match split_params(argv) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{}", e.structured());
            return e.exit_code();
        }
    };
    let args = match Args::try_parse_from(fixed) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(args, params) {
        Ok(done) => {
            for f in &done.files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.structured());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn params_are_split_from_fixed_flags() {
        let (fixed, params) = split_params(os(&[
            "sovlab", "otoc", "--gamma", "1.5", "--out", "d", "--S=3", "--seed", "4",
        ]))
        .unwrap();
        assert_eq!(fixed, os(&["sovlab", "otoc", "--out", "d", "--seed", "4"]));
        let cfg = RunConfig::resolve(Experiment::Otoc, &[params]).unwrap();
        assert_eq!(cfg.float("gamma"), 1.5);
        assert_eq!(cfg.float("S"), 3.0);
        assert!(split_params(os(&["sovlab", "otoc", "--gamma"])).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::Config(ConfigError::UnknownKey("x".into())).exit_code(),
            2
        );
        assert_eq!(CliError::Numerical(SovError::AllDiverged(3)).exit_code(), 3);
        let nc = SovError::NonConvergence {
            overlap: 0.5,
            required: 0.9,
        };
        assert_eq!(CliError::Numerical(nc).exit_code(), 4);
        assert!(CliError::ValidationFailed(1)
            .structured()
            .contains("\"exit_code\":1"));
    }

    #[test]
    fn unknown_key_exits_with_config_code() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(
            main_with_args(os(&["sovlab", "otoc", "--bogus", "1", "--out", out])),
            2
        );
        assert_eq!(
            main_with_args(os(&["sovlab", "otoc", "--gamma", "-2", "--out", out])),
            2
        );
        assert_eq!(
            main_with_args(os(&["sovlab", "otoc", "--threads", "0", "--out", out])),
            2
        );
        assert_eq!(main_with_args(os(&["sovlab", "nonsense"])), 2);
    }
}
