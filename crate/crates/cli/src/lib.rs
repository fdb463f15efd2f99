//! Experiment runner behind the `qvar` binary. Every subcommand reads a JSON
//! config, runs one library operation and writes a versioned JSON document.

mod commands;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};

pub use output::{check_finite, to_canonical_json};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qvar", version, about = "Numerical experiments on Q-valued variational integrals")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output document; overrides "out" in the config. Printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "QVAR_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Metric,
    Energy,
    QcTest,
    Semielliptic,
    RankOne,
    PolyconvexCert,
    Stokes,
    NullLagrangian,
    Fold,
    Lsc,
    Blowup,
    Biting,
    Dlvp,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Metric => "metric",
            Command::Energy => "energy",
            Command::QcTest => "qc-test",
            Command::Semielliptic => "semielliptic",
            Command::RankOne => "rank-one",
            Command::PolyconvexCert => "polyconvex-cert",
            Command::Stokes => "stokes",
            Command::NullLagrangian => "null-lagrangian",
            Command::Fold => "fold",
            Command::Lsc => "lsc",
            Command::Blowup => "blowup",
            Command::Biting => "biting",
            Command::Dlvp => "dlvp",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<qvar_core::QvarError> for CliError {
    fn from(e: qvar_core::QvarError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// What a subcommand hands back: the result body, a one-line summary and
/// optional CSV rows.
pub struct Report {
    pub result: Value,
    pub summary: String,
    pub csv: Option<(PathBuf, Vec<String>, Vec<Vec<String>>)>,
}

impl Report {
    pub fn new<T: Serialize>(result: &T, summary: String) -> Result<Self, CliError> {
        check_finite(result).map_err(|e| CliError::Numerical(e.to_string()))?;
        let result = serde_json::to_value(result).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Report { result, summary, csv: None })
    }
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: u32,
    command: &'a str,
    result: &'a Value,
}

/// Runs one invocation and returns the summary line.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // A pool that already exists (repeated calls in one process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => map,
        Ok(_) => return Err(CliError::Config("config must be a JSON object".into())),
        Err(e) => return Err(CliError::Config(format!("malformed config: {e}"))),
    };
    let out = match config.remove("out") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(CliError::Config("\"out\" must be a string".into())),
    };
    let out = cli.out.clone().or(out);
    let config_seed = match config.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| CliError::Config("\"seed\" must be a non-negative integer".into()))?),
    };
    let seed = cli.seed.or(config_seed);
    let report = commands::dispatch(cli.command, Value::Object(config), seed)?;
    let doc = Document { schema_version: SCHEMA_VERSION, command: cli.command.name(), result: &report.result };
    let bytes = to_canonical_json(&doc).map_err(|e| CliError::Numerical(e.to_string()))?;
    match &out {
        Some(path) => write_file(path, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    if let Some((path, header, rows)) = &report.csv {
        write_csv(path, header, rows)?;
    }
    Ok(format!("{}: {}", cli.command.name(), report.summary))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
