//! Command-line front end: loads a run configuration, dispatches one
//! command and writes CSV signals plus JSON reports into the output
//! directory.
//!
//! Reports are pretty-printed JSON with sorted keys and embed the SHA-256 of
//! the effective configuration. Wall-clock data lives only in
//! `manifest_<command>.json`, so reports are byte-identical across reruns.

pub mod commands;
pub mod config;
pub mod reproduce;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use config::{BuiltModel, ModelConfig, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_HYPOTHESIS: i32 = 4;

const DEFAULT_OUT_DIR: &str = "evostab-out";

#[derive(Debug, Clone, Parser)]
#[command(name = "evostab", version, about = "Mild solutions, Green's operators and stability certificates")]
pub struct Cli {
    /// Run configuration (TOML, or JSON with a `.json` extension).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, value_name = "DIR", env = "EVOSTAB_OUT_DIR")]
    pub out: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// simulate | green | admissibility | certify | classify | reproduce
    #[arg(long, value_name = "NAME")]
    pub command: Option<String>,

    /// Bundle for `reproduce`: example21 | heat_model | staircase | convolution
    #[arg(long, value_name = "ID")]
    pub example: Option<String>,

    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "N", env = "EVOSTAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Green,
    Admissibility,
    Certify,
    Classify,
    Reproduce,
}

impl Command {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "simulate" => Command::Simulate,
            "green" => Command::Green,
            "admissibility" => Command::Admissibility,
            "certify" => Command::Certify,
            "classify" => Command::Classify,
            "reproduce" => Command::Reproduce,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown command `{other}`; expected simulate, green, admissibility, certify, classify or reproduce"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Green => "green",
            Command::Admissibility => "admissibility",
            Command::Certify => "certify",
            Command::Classify => "classify",
            Command::Reproduce => "reproduce",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::Dependency(_) | Error::InvalidInterval { .. } => EXIT_INVALID_CONFIG,
        Error::Domain(_)
        | Error::Estimation(_)
        | Error::CheckFailed(_)
        | Error::Convergence { .. }
        | Error::NonContractive { .. } => EXIT_NUMERIC,
        Error::HypothesisViolation(_) | Error::NonCertifiable { .. } => EXIT_HYPOTHESIS,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_IO,
    }
}

/// Everything a command needs besides its own parameters.
pub struct Context {
    pub command: Command,
    pub config: Option<RunConfig>,
    pub config_hash: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub example: Option<String>,
    files: Vec<String>,
    extra: serde_json::Map<String, Value>,
}

impl Context {
    pub fn config(&self) -> Result<&RunConfig> {
        self.config.as_ref().ok_or_else(|| Error::InvalidConfig(format!("`{}` needs --config", self.command.name())))
    }

    /// Writes `name` as sorted-key JSON wrapped with command, seed and hash.
    pub fn write_report<T: Serialize>(&mut self, name: &str, report: &T) -> Result<PathBuf> {
        let doc = json!({
            "command": self.command.name(),
            "config_hash": self.config_hash,
            "seed": self.seed,
            "report": serde_json::to_value(report)?,
        });
        let path = self.out_dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_signal(&mut self, name: &str, signal: &crate::lp::SampledSignal) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        signal.save_csv(&path)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    /// Adds a field to the run manifest.
    pub fn note(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("thread count must be >= 1".into()));
        }
        // Fails only when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let mut config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    if let (Some(cfg), Some(seed)) = (config.as_mut(), cli.seed) {
        cfg.seed = seed;
    }
    let name = cli
        .command
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.command.clone()))
        .ok_or_else(|| Error::InvalidConfig("no command given (use --command or `command = ...`)".into()))?;
    let command = Command::parse(&name)?;
    if let Some(cfg) = config.as_mut() {
        cfg.command = Some(name);
    }

    let seed = config.as_ref().map(|c| c.seed).or(cli.seed).unwrap_or(0);
    let config_hash = match &config {
        Some(cfg) => cfg.hash()?,
        None => {
            let canonical = serde_json::to_string(&json!({
                "command": command.name(),
                "example": cli.example,
                "seed": seed,
            }))?;
            use sha2::Digest;
            hex::encode(sha2::Sha256::digest(canonical.as_bytes()))
        }
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&out_dir)?;

    let mut ctx = Context {
        command,
        config,
        config_hash,
        seed,
        out_dir,
        example: cli.example.clone(),
        files: Vec::new(),
        extra: serde_json::Map::new(),
    };

    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = match command {
        Command::Simulate => commands::simulate(&mut ctx),
        Command::Green => commands::green(&mut ctx),
        Command::Admissibility => commands::admissibility(&mut ctx),
        Command::Certify => commands::certify(&mut ctx),
        Command::Classify => commands::classify(&mut ctx),
        Command::Reproduce => reproduce::run(&mut ctx),
    };
    write_manifest(&ctx, started, clock.elapsed().as_secs_f64(), outcome.as_ref().err())?;
    outcome
}

fn write_manifest(ctx: &Context, started: SystemTime, elapsed: f64, err: Option<&Error>) -> Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("command".into(), json!(ctx.command.name()));
    doc.insert("config_hash".into(), json!(ctx.config_hash));
    doc.insert("seed".into(), json!(ctx.seed));
    doc.insert("files".into(), json!(ctx.files));
    doc.insert(
        "started_unix_seconds".into(),
        json!(started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)),
    );
    doc.insert("elapsed_seconds".into(), json!(elapsed));
    doc.insert("status".into(), json!(if err.is_some() { "error" } else { "ok" }));
    if let Some(e) = err {
        doc.insert("error".into(), json!(e.to_string()));
    }
    for (k, v) in &ctx.extra {
        doc.insert(k.clone(), v.clone());
    }
    let path: &Path = &ctx.out_dir;
    std::fs::write(
        path.join(format!("manifest_{}.json", ctx.command.name())),
        serde_json::to_string_pretty(&Value::Object(doc))? + "\n",
    )?;
    Ok(())
}
