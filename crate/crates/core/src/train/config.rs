//! Training hyperparameters and their `key=value` serialization.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    Ohem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Epochs between learning-rate halvings.
    pub step_size: usize,
    pub gamma: f64,
    pub batch: usize,
    /// Low-resolution spatial patch size.
    pub patch: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch; 0 derives one pass over the training
    /// scenes from the batch size.
    pub steps_per_epoch: usize,
    pub loss: LossKind,
    /// Hard-pixel fraction for the mined Charbonnier loss.
    pub ohem_k: f64,
    pub charbonnier_eps: f64,
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Defaults follow the efficiency model's recipe; the fidelity model
    /// differs only in mining half the pixels (`ohem_k=0.5`).
    fn default() -> Self {
        TrainConfig {
            lr: 4e-4,
            step_size: 80,
            gamma: 0.5,
            batch: 8,
            patch: 32,
            epochs: 180,
            steps_per_epoch: 0,
            loss: LossKind::Ohem,
            ohem_k: 0.8,
            charbonnier_eps: 1e-3,
            ema_decay: 0.999,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The recipe paired with a model preset name.
    pub fn for_preset(model_name: &str) -> Self {
        let mut cfg = TrainConfig::default();
        if model_name == "gtf" {
            cfg.ohem_k = 0.5;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::ConfigValue { key: key.into(), msg });
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return bad("lr", format!("learning rate {} must be positive", self.lr));
        }
        if self.step_size == 0 {
            return bad("step_size", "schedule step must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("decay factor {} outside (0, 1]", self.gamma));
        }
        if self.batch == 0 || self.patch == 0 || self.epochs == 0 {
            return bad("batch", "batch, patch and epochs must be positive".into());
        }
        if !(self.ohem_k > 0.0 && self.ohem_k <= 1.0) {
            return bad("ohem_k", format!("fraction {} outside (0, 1]", self.ohem_k));
        }
        if self.charbonnier_eps <= 0.0 {
            return bad("charbonnier_eps", "eps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return bad("ema_decay", format!("decay {} outside [0, 1]", self.ema_decay));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, raw_key: &str, value: &str) -> Result<()> {
        let key = raw_key.trim();
        let value = value.trim();
        let err = |msg: String| Error::ConfigValue { key: key.to_string(), msg };
        macro_rules! parse {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|e| err(format!("'{value}': {e}")))?
            };
        }
        match key {
            "lr" => self.lr = parse!(f64),
            "step_size" => self.step_size = parse!(usize),
            "gamma" => self.gamma = parse!(f64),
            "batch" => self.batch = parse!(usize),
            "patch" => self.patch = parse!(usize),
            "epochs" => self.epochs = parse!(usize),
            "steps_per_epoch" => self.steps_per_epoch = parse!(usize),
            "loss" => {
                self.loss = match value {
                    "l1" => LossKind::L1,
                    "ohem" => LossKind::Ohem,
                    _ => return Err(err(format!("'{value}' is not one of l1 | ohem"))),
                }
            }
            "ohem_k" => self.ohem_k = parse!(f64),
            "charbonnier_eps" => self.charbonnier_eps = parse!(f64),
            "ema_decay" => self.ema_decay = parse!(f64),
            "seed" => self.seed = parse!(u64),
            _ => return Err(Error::ConfigKey { key: key.to_string() }),
        }
        Ok(())
    }

    pub fn to_kv_lines(&self) -> Vec<String> {
        let loss = match self.loss {
            LossKind::L1 => "l1",
            LossKind::Ohem => "ohem",
        };
        let mut lines = vec![
            format!("batch={}", self.batch),
            format!("charbonnier_eps={}", self.charbonnier_eps),
            format!("ema_decay={}", self.ema_decay),
            format!("epochs={}", self.epochs),
            format!("gamma={}", self.gamma),
            format!("loss={loss}"),
            format!("lr={}", self.lr),
            format!("ohem_k={}", self.ohem_k),
            format!("patch={}", self.patch),
            format!("seed={}", self.seed),
            format!("step_size={}", self.step_size),
            format!("steps_per_epoch={}", self.steps_per_epoch),
        ];
        lines.sort();
        lines
    }

    pub fn from_kv_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_lines(lines)?;
        Ok(cfg)
    }

    pub fn apply_kv_lines<'a>(&mut self, lines: impl Iterator<Item = &'a str>) -> Result<()> {
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigValue {
                key: line.to_string(),
                msg: "expected key=value".to_string(),
            })?;
            self.apply_kv(k, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_follow_the_recipe() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lr, 4e-4);
        assert_eq!(cfg.step_size, 80);
        assert_eq!(cfg.gamma, 0.5);
        assert_eq!(cfg.batch, 8);
        assert_eq!(cfg.patch, 32);
        assert_eq!(cfg.epochs, 180);
        assert_eq!(cfg.ema_decay, 0.999);
        assert_eq!(cfg.ohem_k, 0.8);
        assert_eq!(TrainConfig::for_preset("gtf").ohem_k, 0.5);
        assert_eq!(TrainConfig::for_preset("gtf_tiny").ohem_k, 0.8);
    }

    #[test]
    fn kv_round_trip_is_identity() {
        let mut cfg = TrainConfig::default();
        cfg.loss = LossKind::L1;
        cfg.seed = 17;
        cfg.steps_per_epoch = 40;
        let lines = cfg.to_kv_lines();
        let back =
            TrainConfig::from_kv_lines(lines.iter().map(|s| s.as_str())).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_keys_and_values_are_named() {
        let mut cfg = TrainConfig::default();
        assert!(matches!(cfg.apply_kv("momentum", "0.9"), Err(Error::ConfigKey { .. })));
        let e = cfg.apply_kv("loss", "huber").unwrap_err();
        assert!(e.to_string().contains("huber"), "{e}");
        let e = cfg.apply_kv("lr", "fast").unwrap_err();
        assert!(e.to_string().contains("lr"), "{e}");
    }

    #[test]
    fn validation_rejects_out_of_range_fields() {
        let mut cfg = TrainConfig::default();
        cfg.ohem_k = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.ema_decay = -0.1;
        assert!(cfg.validate().is_err());
    }
}
