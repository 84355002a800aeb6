//! Library side of the `chernsim` binary: configuration, subcommands and
//! output formatting. Every command returns its outputs as strings so that
//! runs can be compared byte for byte.

pub mod commands;
pub mod config;

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Format, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] chern_interferometer::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "CONFIG",
            CliError::Io(_) => "IO",
            CliError::Core(e) => e.code(),
        }
    }

    /// Process exit status; stable per error code.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "CONFIG" => 2,
            "INVALID_PARAMS" => 3,
            "GAPLESS_POINT" => 4,
            "NOT_QUANTIZED" => 5,
            "MALFORMED_PLAN" => 6,
            "NO_CLOSURE" => 7,
            "PLAQUETTE_SATURATED" => 8,
            "STEP_TOO_LARGE" => 9,
            "DEGENERATE_SCAN" => 10,
            "NOT_RECIPROCAL" => 11,
            "INVALID_PATH" => 12,
            "SERIALIZATION" => 13,
            "IO" => 14,
            _ => 1,
        }
    }

    /// Machine-readable TOML record written to stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Inner<'a> {
            code: &'a str,
            exit_code: i32,
            message: String,
        }
        #[derive(Serialize)]
        struct Outer<'a> {
            error: Inner<'a>,
        }
        toml::to_string(&Outer { error: Inner { code: self.code(), exit_code: self.exit_code(), message: self.to_string() } })
            .unwrap_or_else(|_| format!("[error]\ncode = \"{}\"\n", self.code()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub name: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the resolved configuration in TOML form.
    pub config_hash: String,
}

/// Hex SHA-256 of the resolved configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Record<'a, R: Serialize> {
    artifact: Artifact,
    config: &'a RunConfig,
    result: R,
}

/// Summary record embedding the artifact header and the full config.
pub fn record<R: Serialize>(command: &str, cfg: &RunConfig, result: R) -> Result<String, CliError> {
    let artifact = Artifact {
        name: "chernsim",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_hash: config_hash(cfg)?,
    };
    toml::to_string(&Record { artifact, config: cfg, result }).map_err(|e| CliError::Io(e.to_string()))
}

/// A delimiter-separated table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.to_string(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_dsv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Shortest round-trip float text.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Everything a command produces.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub command: String,
    pub record: String,
    pub table: Table,
    /// Extra tables written only to an output directory.
    pub extra: Vec<Table>,
}

impl Output {
    /// Text for stdout when no output directory is configured.
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Record => Ok(self.record.clone()),
            Format::Dsv => self.table.to_dsv(),
        }
    }

    /// Writes `<command>.toml` and one `.dsv` per table; returns the paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut written = Vec::new();
        let path = dir.join(format!("{}.toml", self.command));
        std::fs::write(&path, &self.record).map_err(io)?;
        written.push(path.display().to_string());
        for t in std::iter::once(&self.table).chain(&self.extra) {
            let path = dir.join(format!("{}.dsv", t.name));
            std::fs::write(&path, t.to_dsv()?).map_err(io)?;
            written.push(path.display().to_string());
        }
        Ok(written)
    }
}

/// Runs `command` against `cfg` and returns the text for stdout.
pub fn execute(command: &commands::Command, cfg: &RunConfig) -> Result<String, CliError> {
    let out = commands::run(command, cfg)?;
    match &cfg.output.dir {
        Some(dir) => Ok(out.write_to(dir)?.join("\n") + "\n"),
        None => out.render(cfg.output.format),
    }
}
