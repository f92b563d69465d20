//! Report envelopes and their JSON/CSV serialization.

use std::io;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// Column-ordered numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt17(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// 17 significant digits; non-finite values spelled out.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Compact JSON with every float written to 17 significant digits.
struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json_sig17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportEnvelope {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch; excluded from the hashed payload.
    pub timestamp: u64,
    /// SHA-256 of [`ReportEnvelope::payload_json`], for regression baselines.
    pub payload_sha256: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub payload: Value,
    #[serde(skip)]
    pub table: Table,
}

/// SHA-256 of the canonical config text without the output directory, hex
/// encoded.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text: String = cfg.to_text().lines().filter(|l| !l.starts_with("out =")).map(|l| format!("{l}\n")).collect();
    hex_sha256(text.as_bytes())
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ReportEnvelope {
    pub fn new(command: &str, cfg: &RunConfig, checks: Vec<Check>, payload: Value, table: Table) -> Self {
        let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let mut env = Self {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            payload_sha256: String::new(),
            passed: checks.iter().all(|c| c.passed),
            checks,
            payload,
            table,
        };
        env.payload_sha256 = env.payload_json().map_or_else(|_| String::new(), |s| hex_sha256(s.as_bytes()));
        env
    }

    /// The deterministic part: everything but the timestamp and the table.
    pub fn payload_json(&self) -> Result<String> {
        to_json_sig17(&serde_json::json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "passed": self.passed,
            "checks": self.checks,
            "payload": self.payload,
        }))
    }

    pub fn file_stem(&self) -> String {
        format!("{}.{}", self.command, &self.config_hash[..16])
    }
}

/// Write `<command>.<hash>.json` and `<command>.<hash>.csv` into `dir`.
pub fn emit_report(env: &ReportEnvelope, dir: &Path) -> Result<[PathBuf; 2]> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json = dir.join(format!("{}.json", env.file_stem()));
    let csv = dir.join(format!("{}.csv", env.file_stem()));
    let mut body = to_json_sig17(env)?;
    body.push('\n');
    std::fs::write(&json, body).with_context(|| format!("writing {}", json.display()))?;
    std::fs::write(&csv, env.table.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    Ok([json, csv])
}
