//! One `run.txt` per run, written next to the outputs: command, resolved
//! config, seed, build id, wall-clock bounds, output paths.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gtf_core::{Error, Result};

pub struct RunManifest {
    command: &'static str,
    seed: Option<u64>,
    started: u64,
    config: Vec<String>,
    outputs: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            command,
            seed: None,
            started: unix_now(),
            config: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn config(&mut self, lines: Vec<String>) -> &mut Self {
        self.config = lines;
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Writes `dir/run.txt`; the only by-design non-reproducible file of a
    /// run (wall-clock stamps), so determinism checks skip it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = String::from("GTFR 1\n");
        text.push_str(&format!("command {}\n", self.command));
        text.push_str(&format!(
            "build {} {}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        ));
        if let Some(seed) = self.seed {
            text.push_str(&format!("seed {seed}\n"));
        }
        text.push_str(&format!("started_unix {}\n", self.started));
        text.push_str(&format!("finished_unix {}\n", unix_now()));
        for out in &self.outputs {
            text.push_str(&format!("output {}\n", out.display()));
        }
        if !self.config.is_empty() {
            text.push_str("config\n");
            for line in &self.config {
                text.push_str(line);
                text.push('\n');
            }
        }
        let path = dir.join("run.txt");
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}
