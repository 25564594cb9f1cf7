//! Record written next to every output directory so a run can be replayed.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Cli;

pub const FILE_NAME: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Command line as invoked; replaying it reproduces the outputs.
    pub argv: Vec<String>,
    /// Every flag after defaults were applied.
    pub flags: serde_json::Value,
    /// Effective configuration where flags only override defaults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, cli: &Cli, seeds: Vec<u64>, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            argv: std::env::args().collect(),
            flags: serde_json::to_value(cli).expect("flags serialize"),
            config: None,
            seeds,
            inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}
