//! The JSON report envelope.
//!
//! ```text
//! { "schema_version": 1, "command": "...", "inputs": {...}, "result": {...},
//!   "meta": { "timestamp": <unix seconds>, "version": "..." } }
//! ```
//!
//! Everything outside `meta` is a pure function of `inputs`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::params::{Params, SCHEMA_VERSION};
use crate::{commands, Failure, Kind};

/// Only read for the default output directory.
pub const OUT_DIR_ENV: &str = "GCLOSURE_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub timestamp: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Params,
    pub result: Value,
    pub meta: Meta,
}

pub fn render(kind: Kind, inputs: &Params, result: &Value) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": kind.name(),
        "inputs": inputs.to_value(),
        "result": result,
        "meta": Meta { timestamp, version: env!("CARGO_PKG_VERSION").to_string() },
    });
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

pub fn destination(kind: Kind, inputs: &Params) -> Option<PathBuf> {
    inputs.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{}.json", kind.name())))
    })
}

pub fn emit(kind: Kind, inputs: &Params, text: &str) -> Result<(), Failure> {
    match destination(kind, inputs) {
        Some(path) => write_file(&path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Re-parses a report and re-validates its inputs and result against the
/// schema of its command.
pub fn validate(text: &str) -> Result<Report, Failure> {
    let r: Report = serde_json::from_str(text).map_err(|e| Failure::Input(format!("report: {e}")))?;
    if r.schema_version != SCHEMA_VERSION {
        return Err(Failure::Input(format!("unsupported schema_version {}", r.schema_version)));
    }
    let kind = Kind::from_name(&r.command)
        .ok_or_else(|| Failure::Input(format!("unknown command `{}`", r.command)))?;
    if r.inputs.command.as_deref() != Some(kind.name()) {
        return Err(Failure::Input("inputs.command does not match command".into()));
    }
    kind.check_keys(&r.inputs)?;
    commands::check_inputs(kind, &r.inputs)?;
    commands::check_result(kind, &r.result)?;
    Ok(r)
}
