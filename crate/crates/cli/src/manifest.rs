//! Run manifests: what went in, what came out, and how to repeat it.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(e.to_string()).context(path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader
            .read(&mut buf)
            .map_err(|e| CliError::data(e.to_string()).context(path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    /// Conversation rows, for dataset inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// The full command line, for re-running.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<InputRecord>,
    /// Training rows after concatenating all training inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_rows: Option<usize>,
    pub outputs: Vec<OutputRecord>,
    pub wall_time_secs: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn start(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            seed: None,
            threads: rayon::current_num_threads(),
            inputs: Vec::new(),
            total_rows: None,
            outputs: Vec::new(),
            wall_time_secs: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, rows: Option<usize>) -> Result<(), CliError> {
        self.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
            rows,
        });
        Ok(())
    }

    /// Hash the listed files in `out`, then write the manifest next to them.
    pub fn finish(mut self, out: &Path, files: &[&str]) -> Result<(), CliError> {
        for f in files {
            self.outputs.push(OutputRecord {
                file: f.to_string(),
                sha256: sha256_file(&out.join(f)).map_err(|e| CliError::internal(e.message))?,
            });
        }
        if let Some(t) = self.started {
            self.wall_time_secs = t.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::internal(e.to_string()))?;
        crate::commands::write_output(out, MANIFEST_FILE, &(text + "\n"))
    }
}
