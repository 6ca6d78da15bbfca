//! Config layering: built-in preset, then a key=value file, then --set
//! flags. Model and training keys share one namespace (they are disjoint);
//! unknown keys fail naming the key.

use std::path::Path;

use gtf_core::model::ModelConfig;
use gtf_core::train::TrainConfig;
use gtf_core::{Error, Result};

pub struct Stacked {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Stacked {
    /// Canonical echo of everything that affects the run.
    pub fn manifest_lines(&self) -> Vec<String> {
        let mut lines = self.model.to_kv_lines();
        lines.extend(self.train.to_kv_lines());
        lines
    }
}

fn apply(stack: &mut Stacked, key: &str, value: &str) -> Result<()> {
    match stack.model.apply_kv(key, value) {
        Err(Error::ConfigKey { .. }) => stack.train.apply_kv(key, value),
        other => other,
    }
}

pub fn resolve(preset: &str, file: Option<&Path>, sets: &[String]) -> Result<Stacked> {
    let mut stack = Stacked {
        model: ModelConfig::preset(preset)?,
        train: TrainConfig::for_preset(preset),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "config file",
                msg: format!("expected key=value, got '{line}'"),
            })?;
            apply(&mut stack, k, v)?;
        }
    }
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Format {
            what: "--set flag",
            msg: format!("expected KEY=VALUE, got '{s}'"),
        })?;
        apply(&mut stack, k, v)?;
    }
    stack.model.validate()?;
    stack.train.validate()?;
    Ok(stack)
}
