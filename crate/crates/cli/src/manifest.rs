use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::{command_line, CliResult, Failure};

#[derive(Debug, Serialize)]
pub struct CellDiscards {
    pub cell: String,
    pub replications: usize,
    pub attempted: usize,
    pub discarded: usize,
}

/// Everything needed to rerun the command that produced a set of files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: &'static str,
    pub wall_time_secs: f64,
    pub outputs: Vec<PathBuf>,
    pub discards: Vec<CellDiscards>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seed: u64, started: Instant, outputs: Vec<PathBuf>) -> Self {
        Self {
            command: command_line(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_secs: started.elapsed().as_secs_f64(),
            outputs,
            discards: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Failure::validation(format!("cannot write {}: {e}", path.display())))
    }
}
