//! Run manifests: enough to reproduce a run and verify its outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Cli;
use crate::error::{CliError, CliResult};
use crate::run::{Output, SCHEMA_VERSION};

pub const RESULT_JSON: &str = "result.json";
pub const RESULT_CSV: &str = "result.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    /// Every flag after defaults and environment were applied.
    pub resolved: Cli,
    pub seed: u64,
    pub mc_draws: usize,
    pub input: Option<InputDigest>,
    pub result_json_sha256: String,
    pub result_csv_sha256: String,
    pub elapsed_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(argv: Vec<String>, cli: &Cli, output: &Output, elapsed_secs: f64) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv,
            resolved: cli.clone(),
            seed: cli.seed,
            mc_draws: cli.mc_draws,
            input: output.input.as_ref().map(|(path, bytes)| InputDigest {
                path: path.clone(),
                sha256: sha256_hex(bytes),
            }),
            result_json_sha256: sha256_hex(output.json.as_bytes()),
            result_csv_sha256: sha256_hex(output.csv.as_bytes()),
            elapsed_secs,
        }
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

/// Writes result and manifest files into `dir`.
pub fn write_all(dir: &Path, output: &Output, manifest: &RunManifest) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Internal(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join(RESULT_JSON), &output.json).map_err(io)?;
    fs::write(dir.join(RESULT_CSV), &output.csv).map_err(io)?;
    fs::write(dir.join(MANIFEST_JSON), manifest.to_json()?).map_err(io)?;
    Ok(())
}

/// Differences between a recorded manifest and a fresh run.
pub fn compare(recorded: &RunManifest, fresh: &RunManifest) -> Vec<String> {
    let mut diffs = Vec::new();
    if recorded.input != fresh.input {
        diffs.push("input digest differs".to_string());
    }
    if recorded.result_json_sha256 != fresh.result_json_sha256 {
        diffs.push("result.json digest differs".to_string());
    }
    if recorded.result_csv_sha256 != fresh.result_csv_sha256 {
        diffs.push("result.csv digest differs".to_string());
    }
    diffs
}
