//! Checkpoint files: a plain-text header (version, step, canonical sorted
//! config) followed by named tensors in the OEPT binary format. Optimizer
//! moments and the EMA shadow ride along under reserved name prefixes so
//! training can resume exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::gtf::GtfModel;
use crate::error::{Error, Result};
use crate::tensor::format::{read_tensor, write_tensor};
use crate::tensor::{Elem, Tensor};

const MAGIC: &str = "GTFC 1";

/// Which weight set of a checkpoint to materialize into a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSet {
    Raw,
    Ema,
}

pub struct Checkpoint<E: Elem> {
    pub config: ModelConfig,
    /// Training config echoed as key=value lines; informational only.
    pub train: Vec<String>,
    pub step: u64,
    pub params: BTreeMap<String, Tensor<E>>,
    pub ema: BTreeMap<String, Tensor<E>>,
    pub adam_m: BTreeMap<String, Tensor<E>>,
    pub adam_v: BTreeMap<String, Tensor<E>>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path, e)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        msg: msg.into(),
    }
}

impl<E: Elem> Checkpoint<E> {
    /// Snapshots a model (plus optional EMA shadow / optimizer moments keyed
    /// by parameter name).
    pub fn from_model(
        model: &GtfModel<E>,
        step: u64,
        ema: &BTreeMap<String, Vec<E>>,
        adam_m: &BTreeMap<String, Vec<E>>,
        adam_v: &BTreeMap<String, Vec<E>>,
    ) -> Result<Self> {
        let mut params = BTreeMap::new();
        model.visit("", &mut |name, p| {
            params.insert(name.to_string(), p.detach());
        });
        let shaped = |src: &BTreeMap<String, Vec<E>>| -> Result<BTreeMap<String, Tensor<E>>> {
            src.iter()
                .map(|(name, data)| {
                    let base = params
                        .get(name)
                        .ok_or_else(|| format_err(format!("unknown parameter '{name}'")))?;
                    Ok((
                        name.clone(),
                        Tensor::from_vec(data.clone(), base.shape())?,
                    ))
                })
                .collect()
        };
        let ema = shaped(ema)?;
        let adam_m = shaped(adam_m)?;
        let adam_v = shaped(adam_v)?;
        Ok(Checkpoint {
            config: model.config().clone(),
            train: Vec::new(),
            step,
            params,
            ema,
            adam_m,
            adam_v,
        })
    }

    pub fn with_train_lines(mut self, lines: Vec<String>) -> Self {
        self.train = lines;
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        let mut entries: Vec<(String, &Tensor<E>)> = Vec::new();
        for (name, t) in &self.params {
            entries.push((format!("model.{name}"), t));
        }
        for (name, t) in &self.ema {
            entries.push((format!("ema.{name}"), t));
        }
        for (name, t) in &self.adam_m {
            entries.push((format!("adam_m.{name}"), t));
        }
        for (name, t) in &self.adam_v {
            entries.push((format!("adam_v.{name}"), t));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));

        let config_lines = self.config.to_kv_lines();
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        header.push_str(&format!("step {}\n", self.step));
        header.push_str(&format!("config {}\n", config_lines.len()));
        for line in &config_lines {
            header.push_str(line);
            header.push('\n');
        }
        header.push_str(&format!("train {}\n", self.train.len()));
        for line in &self.train {
            header.push_str(line);
            header.push('\n');
        }
        header.push_str(&format!("tensors {}\n", entries.len()));
        w.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
        for (name, t) in entries {
            w.write_all(name.as_bytes()).map_err(|e| io_err(path, e))?;
            w.write_all(b"\n").map_err(|e| io_err(path, e))?;
            write_tensor(&mut w, t).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        let read_line = |r: &mut BufReader<File>, line: &mut String| -> Result<String> {
            line.clear();
            let n = r.read_line(line).map_err(|e| io_err(path, e))?;
            if n == 0 {
                return Err(format_err("unexpected end of header"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };

        if read_line(&mut r, &mut line)? != MAGIC {
            return Err(format_err("bad magic; not a checkpoint file"));
        }
        let step_line = read_line(&mut r, &mut line)?;
        let step = step_line
            .strip_prefix("step ")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| format_err(format!("bad step line '{step_line}'")))?;
        let cfg_line = read_line(&mut r, &mut line)?;
        let n_cfg = cfg_line
            .strip_prefix("config ")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format_err(format!("bad config line '{cfg_line}'")))?;
        let mut cfg_lines = Vec::with_capacity(n_cfg);
        for _ in 0..n_cfg {
            cfg_lines.push(read_line(&mut r, &mut line)?);
        }
        let config = ModelConfig::from_kv_lines(cfg_lines.iter().map(|s| s.as_str()))?;
        let train_line = read_line(&mut r, &mut line)?;
        let n_train = train_line
            .strip_prefix("train ")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format_err(format!("bad train line '{train_line}'")))?;
        let mut train = Vec::with_capacity(n_train);
        for _ in 0..n_train {
            train.push(read_line(&mut r, &mut line)?);
        }
        let tensors_line = read_line(&mut r, &mut line)?;
        let n_tensors = tensors_line
            .strip_prefix("tensors ")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| format_err(format!("bad tensors line '{tensors_line}'")))?;

        let mut params = BTreeMap::new();
        let mut ema = BTreeMap::new();
        let mut adam_m = BTreeMap::new();
        let mut adam_v = BTreeMap::new();
        for _ in 0..n_tensors {
            let name = read_line(&mut r, &mut line)?;
            let tensor = read_tensor::<E, _>(&mut r)?;
            if let Some(rest) = name.strip_prefix("model.") {
                params.insert(rest.to_string(), tensor);
            } else if let Some(rest) = name.strip_prefix("ema.") {
                ema.insert(rest.to_string(), tensor);
            } else if let Some(rest) = name.strip_prefix("adam_m.") {
                adam_m.insert(rest.to_string(), tensor);
            } else if let Some(rest) = name.strip_prefix("adam_v.") {
                adam_v.insert(rest.to_string(), tensor);
            } else {
                return Err(format_err(format!("unrecognized tensor section '{name}'")));
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| io_err(path, e))?;
        if !rest.is_empty() {
            return Err(format_err(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint { config, train, step, params, ema, adam_m, adam_v })
    }

    /// Rebuilds the model from the stored config and loads one weight set.
    /// Every stored weight must match a model parameter and vice versa.
    pub fn build_model(&self, which: WeightSet) -> Result<GtfModel<E>> {
        let source = match which {
            WeightSet::Raw => &self.params,
            WeightSet::Ema => {
                if self.ema.is_empty() {
                    return Err(format_err("checkpoint has no EMA weights"));
                }
                &self.ema
            }
        };
        let mut model = GtfModel::new(&self.config, 0)?;
        let mut missing = Vec::new();
        let mut used = 0usize;
        let mut apply_err: Option<Error> = None;
        model.visit_mut("", &mut |name, p| {
            if apply_err.is_some() {
                return;
            }
            match source.get(name) {
                Some(t) if t.shape() == p.shape() => {
                    used += 1;
                    if let Err(e) = p.set_data(t.data().to_vec()) {
                        apply_err = Some(e);
                    }
                }
                Some(t) => {
                    apply_err = Some(format_err(format!(
                        "shape mismatch for '{name}': stored {:?}, model {:?}",
                        t.shape(),
                        p.shape()
                    )));
                }
                None => missing.push(name.to_string()),
            }
        });
        if let Some(e) = apply_err {
            return Err(e);
        }
        if !missing.is_empty() {
            return Err(format_err(format!("missing weights: {}", missing.join(", "))));
        }
        if used != source.len() {
            return Err(format_err(format!(
                "{} stored tensors do not correspond to any model parameter",
                source.len() - used
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::Mode;
    use crate::geometry::LightField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot(model: &GtfModel<f32>) -> Checkpoint<f32> {
        let mut ema = BTreeMap::new();
        model.visit("", &mut |name, p| {
            ema.insert(name.to_string(), p.data().to_vec());
        });
        Checkpoint::from_model(model, 42, &ema, &BTreeMap::new(), &BTreeMap::new())
            .unwrap()
            .with_train_lines(vec!["lr=0.0004".into(), "seed=5".into()])
    }

    #[test]
    fn round_trip_preserves_everything() {
        let cfg = ModelConfig::nano();
        let model = GtfModel::<f32>::new(&cfg, 5).unwrap();
        let ckpt = snapshot(&model);
        let dir = std::env::temp_dir().join("gtf_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::<f32>::load(&path).unwrap();
        assert_eq!(loaded.step, 42);
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.train, ckpt.train);
        assert_eq!(loaded.params.len(), ckpt.params.len());
        for (name, t) in &ckpt.params {
            assert_eq!(loaded.params[name].data(), t.data(), "{name}");
        }
        assert_eq!(loaded.ema.len(), ckpt.params.len());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rebuilt_model_reproduces_outputs() {
        let cfg = ModelConfig::nano();
        let model = GtfModel::<f32>::new(&cfg, 9).unwrap();
        let ckpt = snapshot(&model);
        let dir = std::env::temp_dir().join("gtf_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rebuild.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::<f32>::load(&path).unwrap();
        let rebuilt = loaded.build_model(WeightSet::Raw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = crate::tensor::Tensor::rand_uniform(&[1, 1, 9, 6, 6], 0.0, 1.0, &mut rng);
        let lf = LightField::new(t, 3, 3).unwrap();
        let a = model.forward_y(&lf, &mut Mode::Eval).unwrap();
        let b = rebuilt.forward_y(&lf, &mut Mode::Eval).unwrap();
        assert_eq!(a.tensor().data(), b.tensor().data());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn ema_weight_set_loads_separately() {
        let cfg = ModelConfig::nano();
        let model = GtfModel::<f32>::new(&cfg, 11).unwrap();
        let mut ema = BTreeMap::new();
        model.visit("", &mut |name, p| {
            ema.insert(name.to_string(), vec![0.5f32; p.numel()]);
        });
        let ckpt =
            Checkpoint::from_model(&model, 1, &ema, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let rebuilt = ckpt.build_model(WeightSet::Ema).unwrap();
        let mut all_half = true;
        rebuilt.visit("", &mut |_, p| {
            all_half &= p.data().iter().all(|&v| v == 0.5);
        });
        assert!(all_half);
    }

    #[test]
    fn corrupt_and_mismatched_files_are_rejected() {
        let dir = std::env::temp_dir().join("gtf_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corrupt.ckpt");
        std::fs::write(&path, b"NOPE 9\n").unwrap();
        assert!(Checkpoint::<f32>::load(&path).is_err());
        std::fs::remove_file(&path).ok();

        // Strip one tensor: rebuild must fail with the name listed.
        let cfg = ModelConfig::nano();
        let model = GtfModel::<f32>::new(&cfg, 2).unwrap();
        let mut ckpt = snapshot(&model);
        ckpt.params.remove("shallow.w");
        let err = match ckpt.build_model(WeightSet::Raw) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected missing-weight error"),
        };
        assert!(err.contains("shallow.w"), "{err}");
    }
}
