//! Run manifests.
//!
//! The manifest records the resolved configuration, the subcommand and the
//! hash of every output. Wall times live only here, so re-running from a
//! manifest reproduces every other file byte for byte.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{OutputRecord, RunDir};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: ExperimentConfig,
    pub stages: Vec<StageTime>,
    pub outputs: Vec<OutputRecord>,
}

/// Per-stage wall clock.
#[derive(Debug, Default)]
pub struct Stopwatch {
    stages: Vec<StageTime>,
}

impl Stopwatch {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn stages(&self) -> &[StageTime] {
        &self.stages
    }
}

impl RunManifest {
    pub fn new(command: &str, threads: usize, config: &ExperimentConfig, clock: &Stopwatch, run: &RunDir) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            threads,
            config: config.clone(),
            stages: clock.stages().to_vec(),
            outputs: run.outputs().to_vec(),
        }
    }

    /// Written last, atomically, and not listed among its own outputs.
    pub fn write(&self, run: &RunDir) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        crate::io::atomic_write(&run.root().join(MANIFEST_FILE), text.as_bytes())
    }
}
