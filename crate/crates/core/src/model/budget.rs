//! Analytic parameter and FLOP accounting, mirroring the constructed model
//! layer by layer. FLOPs count multiply-accumulate-bearing ops (convolutions,
//! linears, attention matmuls, bicubic taps) as 2 per MAC at batch size 1;
//! normalizations, activations, and residual adds are excluded (well under
//! 1% of the total for every preset).

use super::config::ModelConfig;

/// Published efficiency-variant budget this implementation is compared
/// against: 0.915M parameters, 19.8G FLOPs at a 5x5x32x32 input.
pub const REFERENCE_TINY_PARAMS: usize = 915_000;
pub const REFERENCE_TINY_FLOPS: u64 = 19_800_000_000;
/// Hard ceilings the efficiency variant must stay under.
pub const TINY_PARAM_LIMIT: usize = 1_000_000;
pub const TINY_FLOP_LIMIT: u64 = 20_000_000_000;

#[derive(Clone, Debug)]
pub struct BudgetRow {
    pub component: String,
    pub params: usize,
    pub flops: u64,
}

#[derive(Clone, Debug)]
pub struct Budget {
    pub rows: Vec<BudgetRow>,
    pub params: usize,
    pub flops: u64,
}

impl Budget {
    /// Plain text table, one row per component plus a totals row.
    pub fn render(&self) -> String {
        let mut out = String::from("component,params,flops\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.component, r.params, r.flops));
        }
        out.push_str(&format!("total,{},{}\n", self.params, self.flops));
        out
    }
}

fn linear_params(i: usize, o: usize) -> usize {
    i * o + o
}

fn conv3d_params(co: usize, ci: usize, k: [usize; 3]) -> usize {
    co * ci * k[0] * k[1] * k[2] + co
}

fn branch_params(cfg: &ModelConfig) -> usize {
    let c = cfg.channels;
    let rc = c * cfg.ffn_ratio;
    let ln = 2 * c;
    let mhsa = 4 * linear_params(c, c);
    let gains = 2 * c;
    let ffn = if cfg.ffn_per_token {
        ln + linear_params(c, rc) + linear_params(rc, c)
    } else {
        ln + linear_params(c, rc) + (rc * 9 + rc) + linear_params(rc, c)
    };
    ln + mhsa + gains + ffn
}

fn gate_hidden(cfg: &ModelConfig) -> usize {
    (cfg.channels / cfg.fusion_reduction).max(1)
}

fn block_params(cfg: &ModelConfig) -> usize {
    let c = cfg.channels;
    let branch = branch_params(cfg);
    let hv = if cfg.share_hv { branch } else { 2 * branch };
    let diag = if cfg.use_diagonal {
        let k = cfg.refine_kernel;
        branch + conv3d_params(c, c, [k, k, k])
    } else {
        0
    };
    let gate = if cfg.fusion_adaptive {
        let hid = gate_hidden(cfg);
        linear_params(c, hid) + linear_params(hid, 3 * c)
    } else {
        0
    };
    let k = cfg.fuse_kernel;
    hv + diag + gate + conv3d_params(c, c, [k, k, k])
}

/// FLOPs of one directional branch applied to `s` sequences of `l` tokens.
fn branch_flops(cfg: &ModelConfig, s: u64, l: u64) -> u64 {
    let c = cfg.channels as u64;
    let rc = c * cfg.ffn_ratio as u64;
    let qkvo = 4 * 2 * c * c * l * s;
    let attn = 4 * l * l * c * s;
    let ffn = if cfg.ffn_per_token {
        2 * c * rc * l * s * 2
    } else {
        2 * c * rc * l * s + 2 * rc * 9 * l * s + 2 * rc * c * l * s
    };
    qkvo + attn + ffn
}

fn block_flops(cfg: &ModelConfig, h: u64, w: u64) -> u64 {
    let c = cfg.channels as u64;
    let (u, v) = (cfg.u as u64, cfg.v as u64);
    let field = u * v * h * w;
    let horizontal = branch_flops(cfg, v * w, u * h);
    let vertical = branch_flops(cfg, u * h, v * w);
    let diag = if cfg.use_diagonal {
        let k = cfg.refine_kernel as u64;
        2 * branch_flops(cfg, w, u * h) + 2 * c * c * k * k * k * field
    } else {
        0
    };
    let gate = if cfg.fusion_adaptive {
        let hid = gate_hidden(cfg) as u64;
        2 * (c * hid + hid * 3 * c)
    } else {
        0
    };
    let k = cfg.fuse_kernel as u64;
    horizontal + vertical + diag + gate + 2 * c * c * k * k * k * field
}

/// Per-component table at LR input `h x w`, batch 1.
pub fn budget_table(cfg: &ModelConfig, h: usize, w: usize) -> Budget {
    let c = cfg.channels;
    let (cu, cv) = (cfg.u as u64, cfg.v as u64);
    let (hh, ww) = (h as u64, w as u64);
    let field = cu * cv * hh * ww;
    let a2 = cfg.scale * cfg.scale;
    let hr_field = field * a2 as u64;
    let mut rows = Vec::new();

    rows.push(BudgetRow {
        component: "shallow".into(),
        params: conv3d_params(c, 1, [3, 3, 3]),
        flops: 2 * (c as u64) * 27 * field,
    });
    if cfg.use_macpi_prior {
        rows.push(BudgetRow {
            component: "macpi_prior".into(),
            params: conv3d_params(c, 1, [1, 3, 3]) + conv3d_params(c, 2 * c, [1, 1, 1]),
            flops: 2 * (c as u64) * 9 * field + 2 * (2 * c * c) as u64 * field,
        });
    }
    if cfg.use_angular_embed {
        rows.push(BudgetRow {
            component: "angular_embed".into(),
            params: c * cfg.angular_views(),
            flops: 0,
        });
    }
    rows.push(BudgetRow {
        component: format!("blocks x{}", cfg.blocks),
        params: cfg.blocks * block_params(cfg),
        flops: cfg.blocks as u64 * block_flops(cfg, hh, ww),
    });
    if !cfg.mla_taps.is_empty() {
        let t = cfg.mla_taps.len();
        rows.push(BudgetRow {
            component: "mla_fuse".into(),
            params: conv3d_params(c, t * c, [1, 1, 1]),
            flops: 2 * (t * c * c) as u64 * field,
        });
    }
    rows.push(BudgetRow {
        component: "head".into(),
        params: conv3d_params(c * a2, c, [1, 1, 1]) + conv3d_params(1, c, [1, 3, 3]),
        flops: 2 * (c * c * a2) as u64 * field + 2 * (c as u64) * 9 * hr_field,
    });
    rows.push(BudgetRow {
        component: "bicubic_residual".into(),
        params: 0,
        // Two separable passes, 4 taps each, 2 flops per tap.
        flops: 16 * hr_field,
    });

    let params = rows.iter().map(|r| r.params).sum();
    let flops = rows.iter().map(|r| r.flops).sum();
    Budget { rows, params, flops }
}

pub fn count_params(cfg: &ModelConfig) -> usize {
    budget_table(cfg, 32, 32).params
}

pub fn count_flops(cfg: &ModelConfig, h: usize, w: usize) -> u64 {
    budget_table(cfg, h, w).flops
}
