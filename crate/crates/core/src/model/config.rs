//! Model hyperparameters, the named presets, and the plain-text
//! `key=value` serialization used by config files and checkpoint headers.

use crate::blocks::branch::BranchConfig;
use crate::blocks::fusion::FusionConfig;
use crate::blocks::omni::BlockConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Preset name the config was derived from, kept for reporting.
    pub name: String,
    pub channels: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ffn_ratio: usize,
    /// Spatial super-resolution factor.
    pub scale: usize,
    pub u: usize,
    pub v: usize,
    pub droppath: f64,
    pub layerscale_init: f64,
    /// Attention band half-width along the spatial token coordinate.
    pub local_window: Option<usize>,
    pub share_hv: bool,
    pub use_diagonal: bool,
    pub fusion_adaptive: bool,
    pub fusion_sigmoid: bool,
    pub fusion_reduction: usize,
    pub fuse_kernel: usize,
    pub refine_kernel: usize,
    pub use_macpi_prior: bool,
    pub use_angular_embed: bool,
    /// Block indices whose outputs feed multi-level aggregation; empty
    /// means a plain long skip from the block stack input instead.
    pub mla_taps: Vec<usize>,
    pub ffn_per_token: bool,
}

impl ModelConfig {
    /// Fidelity-oriented preset: wide, deep, shared H/V weights, macro-pixel
    /// prior, long skip instead of multi-level aggregation.
    pub fn gtf() -> Self {
        ModelConfig {
            name: "gtf".to_string(),
            channels: 128,
            blocks: 8,
            heads: 8,
            ffn_ratio: 4,
            scale: 4,
            u: 5,
            v: 5,
            droppath: 0.1,
            layerscale_init: 1e-2,
            local_window: Some(8),
            share_hv: true,
            use_diagonal: true,
            fusion_adaptive: true,
            fusion_sigmoid: false,
            fusion_reduction: 4,
            fuse_kernel: 3,
            refine_kernel: 3,
            use_macpi_prior: true,
            use_angular_embed: false,
            mla_taps: Vec::new(),
            ffn_per_token: false,
        }
    }

    /// Efficiency preset: narrow, decoupled branches, sigmoid gates,
    /// pointwise fusion/refinement convolutions, multi-level aggregation.
    pub fn gtf_tiny() -> Self {
        ModelConfig {
            name: "gtf_tiny".to_string(),
            channels: 32,
            blocks: 6,
            heads: 4,
            ffn_ratio: 2,
            scale: 4,
            u: 5,
            v: 5,
            droppath: 0.0,
            layerscale_init: 1e-2,
            local_window: None,
            share_hv: false,
            use_diagonal: true,
            fusion_adaptive: true,
            fusion_sigmoid: true,
            fusion_reduction: 2,
            fuse_kernel: 1,
            refine_kernel: 1,
            use_macpi_prior: false,
            use_angular_embed: true,
            mla_taps: vec![1, 3, 5],
            ffn_per_token: false,
        }
    }

    /// Test-scale preset for overfit runs, gradient checks, and CI.
    pub fn nano() -> Self {
        ModelConfig {
            name: "nano".to_string(),
            channels: 8,
            blocks: 2,
            heads: 2,
            ffn_ratio: 2,
            scale: 2,
            u: 3,
            v: 3,
            droppath: 0.0,
            layerscale_init: 1e-2,
            local_window: None,
            share_hv: true,
            use_diagonal: true,
            fusion_adaptive: true,
            fusion_sigmoid: true,
            fusion_reduction: 2,
            fuse_kernel: 1,
            refine_kernel: 1,
            use_macpi_prior: true,
            use_angular_embed: true,
            mla_taps: Vec::new(),
            ffn_per_token: false,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gtf" => Ok(Self::gtf()),
            "gtf_tiny" => Ok(Self::gtf_tiny()),
            "nano" => Ok(Self::nano()),
            _ => Err(Error::ConfigValue {
                key: "preset".to_string(),
                msg: format!("unknown preset '{name}' (gtf | gtf_tiny | nano)"),
            }),
        }
    }

    pub fn angular_views(&self) -> usize {
        self.u * self.v
    }

    pub fn branch_config(&self) -> BranchConfig {
        BranchConfig {
            channels: self.channels,
            heads: self.heads,
            ffn_ratio: self.ffn_ratio,
            layerscale_init: self.layerscale_init,
            droppath_rate: self.droppath,
            local_window: self.local_window,
            ffn_per_token: self.ffn_per_token,
        }
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            branch: self.branch_config(),
            fusion: FusionConfig {
                channels: self.channels,
                reduction: self.fusion_reduction,
                sigmoid: self.fusion_sigmoid,
                fuse_kernel: self.fuse_kernel,
                adaptive: self.fusion_adaptive,
            },
            share_hv: self.share_hv,
            use_diagonal: self.use_diagonal,
            refine_kernel: self.refine_kernel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::ConfigValue { key: key.into(), msg });
        if self.channels == 0 || self.heads == 0 || self.channels % self.heads != 0 {
            return bad(
                "heads",
                format!("channels {} must divide by heads {}", self.channels, self.heads),
            );
        }
        if self.blocks == 0 {
            return bad("blocks", "need at least one block".into());
        }
        if self.scale == 0 {
            return bad("scale", "scale must be a positive integer".into());
        }
        if self.u == 0 || self.v == 0 {
            return bad("u", format!("angular grid {}x{} invalid", self.u, self.v));
        }
        if self.use_diagonal && self.u != self.v {
            return bad(
                "diagonal",
                format!("diagonal branch needs a square angular grid, got {}x{}", self.u, self.v),
            );
        }
        if self.fuse_kernel % 2 == 0 || self.refine_kernel % 2 == 0 {
            return bad("fuse_kernel", "convolution kernels must be odd".into());
        }
        if self.fusion_reduction == 0 {
            return bad("fusion_reduction", "reduction must be positive".into());
        }
        if !(0.0..1.0).contains(&self.droppath) {
            return bad("droppath", format!("rate {} outside [0, 1)", self.droppath));
        }
        if let Some(&t) = self.mla_taps.iter().find(|&&t| t >= self.blocks) {
            return bad(
                "mla_taps",
                format!("tap {t} out of range for {} blocks", self.blocks),
            );
        }
        Ok(())
    }

    /// Applies one `key=value` override. Unknown keys and malformed values
    /// are reported by name.
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
            "name" => self.name = value.to_string(),
            "channels" => self.channels = parse!(usize),
            "blocks" => self.blocks = parse!(usize),
            "heads" => self.heads = parse!(usize),
            "ffn_ratio" => self.ffn_ratio = parse!(usize),
            "scale" => self.scale = parse!(usize),
            "u" => self.u = parse!(usize),
            "v" => self.v = parse!(usize),
            "droppath" => self.droppath = parse!(f64),
            "layerscale_init" => self.layerscale_init = parse!(f64),
            "local_window" => {
                self.local_window = if value == "none" {
                    None
                } else {
                    Some(parse!(usize))
                }
            }
            "share_hv" => self.share_hv = parse!(bool),
            "diagonal" => self.use_diagonal = parse!(bool),
            "fusion_adaptive" => self.fusion_adaptive = parse!(bool),
            "fusion_sigmoid" => self.fusion_sigmoid = parse!(bool),
            "fusion_reduction" => self.fusion_reduction = parse!(usize),
            "fuse_kernel" => self.fuse_kernel = parse!(usize),
            "refine_kernel" => self.refine_kernel = parse!(usize),
            "macpi_prior" => self.use_macpi_prior = parse!(bool),
            "angular_embed" => self.use_angular_embed = parse!(bool),
            "mla_taps" => {
                self.mla_taps = if value == "none" || value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|e| err(format!("'{s}': {e}"))))
                        .collect::<Result<Vec<_>>>()?
                }
            }
            "ffn_per_token" => self.ffn_per_token = parse!(bool),
            _ => return Err(Error::ConfigKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Canonical serialization: one `key=value` per line, keys sorted.
    pub fn to_kv_lines(&self) -> Vec<String> {
        let window = match self.local_window {
            Some(w) => w.to_string(),
            None => "none".to_string(),
        };
        let taps = if self.mla_taps.is_empty() {
            "none".to_string()
        } else {
            self.mla_taps
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut lines = vec![
            format!("angular_embed={}", self.use_angular_embed),
            format!("blocks={}", self.blocks),
            format!("channels={}", self.channels),
            format!("diagonal={}", self.use_diagonal),
            format!("droppath={}", self.droppath),
            format!("ffn_per_token={}", self.ffn_per_token),
            format!("ffn_ratio={}", self.ffn_ratio),
            format!("fuse_kernel={}", self.fuse_kernel),
            format!("fusion_adaptive={}", self.fusion_adaptive),
            format!("fusion_reduction={}", self.fusion_reduction),
            format!("fusion_sigmoid={}", self.fusion_sigmoid),
            format!("heads={}", self.heads),
            format!("layerscale_init={}", self.layerscale_init),
            format!("local_window={window}"),
            format!("macpi_prior={}", self.use_macpi_prior),
            format!("mla_taps={taps}"),
            format!("name={}", self.name),
            format!("refine_kernel={}", self.refine_kernel),
            format!("scale={}", self.scale),
            format!("share_hv={}", self.share_hv),
            format!("u={}", self.u),
            format!("v={}", self.v),
        ];
        lines.sort();
        lines
    }

    /// Parses the output of [`ModelConfig::to_kv_lines`] (or a user config
    /// file); `#` starts a comment, blank lines are skipped.
    pub fn from_kv_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut cfg = Self::gtf_tiny();
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
    fn presets_validate() {
        for name in ["gtf", "gtf_tiny", "nano"] {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("huge").is_err());
    }

    #[test]
    fn kv_round_trip_is_identity() {
        for cfg in [ModelConfig::gtf(), ModelConfig::gtf_tiny(), ModelConfig::nano()] {
            let lines = cfg.to_kv_lines();
            let joined: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
            let back = ModelConfig::from_kv_lines(joined.into_iter()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn unknown_key_is_named_in_error() {
        let mut cfg = ModelConfig::nano();
        let e = cfg.apply_kv("chanels", "32").unwrap_err();
        assert!(e.to_string().contains("chanels"), "{e}");
    }

    #[test]
    fn bad_value_is_reported_with_key() {
        let mut cfg = ModelConfig::nano();
        let e = cfg.apply_kv("channels", "many").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("channels") && msg.contains("many"), "{msg}");
    }

    #[test]
    fn validation_catches_bad_combinations() {
        let mut cfg = ModelConfig::nano();
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::nano();
        cfg.u = 2;
        cfg.v = 3;
        assert!(cfg.validate().is_err()); // diagonal needs square grid
        cfg.use_diagonal = false;
        cfg.validate().unwrap();
        let mut cfg = ModelConfig::nano();
        cfg.mla_taps = vec![5];
        assert!(cfg.validate().is_err());
    }
}
