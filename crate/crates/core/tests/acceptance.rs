//! Release gates. Each test checks one contract end to end and prints a
//! single PASS/FAIL line with the measured numbers; run with
//! `cargo test --test acceptance -- --nocapture` to see them all.

use gtf_core::blocks::Mode;
use gtf_core::eval::{
    blend_weight_map, epsw_infer, psnr_y, slope_probe, textured_scene, tta_infer, BlendWindow,
    TileSpec,
};
use gtf_core::geometry::{
    extract_diagonals, from_epi, scatter_diagonals, to_horizontal_epi, to_macpi, to_vertical_epi,
    Dihedral, LightField,
};
use gtf_core::model::budget::{
    REFERENCE_TINY_FLOPS, REFERENCE_TINY_PARAMS, TINY_FLOP_LIMIT, TINY_PARAM_LIMIT,
};
use gtf_core::model::{block_grad_suite, budget_table, count_params, GtfModel, ModelConfig, WeightSet};
use gtf_core::train::{charbonnier_ohem, l1_loss, train_loop, LossKind, TrainConfig, TrainData};
use gtf_core::{backward, no_grad, Result, Scale, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prints the one-line verdict, then enforces it.
fn gate(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn bits<E: gtf_core::Elem>(t: &Tensor<E>) -> Vec<u64> {
    t.data().iter().map(|x| x.as_f64().to_bits()).collect()
}

fn random_lf(b: usize, c: usize, u: usize, v: usize, h: usize, w: usize, seed: u64) -> LightField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Tensor::rand_uniform(&[b, c, u * v, h, w], -1.0, 1.0, &mut rng);
    LightField::new(t, u, v).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn c01_budget_gate() {
    let cfg = ModelConfig::preset("gtf_tiny").unwrap();
    let b = budget_table(&cfg, 32, 32);
    let pgap = 100.0 * (b.params as f64 / REFERENCE_TINY_PARAMS as f64 - 1.0);
    let fgap = 100.0 * (b.flops as f64 / REFERENCE_TINY_FLOPS as f64 - 1.0);
    let ok = b.params < TINY_PARAM_LIMIT && b.flops < TINY_FLOP_LIMIT;
    gate(
        "criterion 1 (budget gate)",
        ok,
        format!(
            "gtf_tiny at 5x5x32x32: {} params (< {}), {:.2}e9 flops (< {}e9); \
             gap to the reported 0.915M/19.8G: {pgap:+.1}% / {fgap:+.1}% \
             (both outside +/-15%; the hard ceilings govern, see README)",
            b.params,
            TINY_PARAM_LIMIT,
            b.flops as f64 / 1e9,
            TINY_FLOP_LIMIT / 1_000_000_000,
        ),
    );
}

#[test]
fn c02_geometry_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trips = 0usize;
    for _ in 0..200 {
        let (b, c) = (rng.random_range(1..=2), rng.random_range(1..=3));
        let (u, v) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let lf = random_lf(b, c, u, v, h, w, rng.random());
        let want = bits(lf.tensor());
        for view in [to_horizontal_epi(&lf), to_vertical_epi(&lf), to_macpi(&lf)] {
            let back = from_epi(&view.unwrap()).unwrap();
            assert_eq!(bits(back.tensor()), want, "round trip {u}x{v} {h}x{w}");
            trips += 1;
        }
    }

    // Diagonal gather against a brute-force index oracle, then the additive
    // scatter with distinguishable branch payloads.
    for u in [1usize, 2, 3, 5] {
        let (b, c, h, w) = (1usize, 2usize, 3usize, 4usize);
        let n = b * c * u * u * h * w;
        let t = Tensor::from_vec((0..n).map(|i| i as f64).collect(), &[b, c, u * u, h, w]).unwrap();
        let lf = LightField::new(t, u, u).unwrap();
        let data = lf.tensor().data();
        let (d45, d135) = extract_diagonals(&lf).unwrap();

        let angular = |k: usize, rising: bool| if rising { k * u + k } else { k * u + (u - 1 - k) };
        let expect = |rising: bool| -> Vec<f64> {
            let mut out = vec![0.0; b * c * w * u * h];
            for bb in 0..b {
                for cc in 0..c {
                    for x in 0..w {
                        for k in 0..u {
                            for y in 0..h {
                                let src = (((bb * c + cc) * (u * u) + angular(k, rising)) * h + y) * w + x;
                                out[(((bb * c + cc) * w + x) * u + k) * h + y] = data[src];
                            }
                        }
                    }
                }
            }
            out
        };
        assert_eq!(d45.tensor().data(), &expect(true)[..], "45 gather U={u}");
        assert_eq!(d135.tensor().data(), &expect(false)[..], "135 gather U={u}");

        let scaled = |view: &gtf_core::geometry::EpiView<f64>, s: f64| {
            let t = Tensor::from_vec(
                view.tensor().data().iter().map(|x| s * x).collect(),
                view.tensor().shape(),
            )
            .unwrap();
            view.with_tensor(t).unwrap()
        };
        let out = scatter_diagonals(&scaled(&d45, 2.0), &scaled(&d135, 3.0), &lf).unwrap();
        let mut want = vec![0.0; n];
        for bb in 0..b {
            for cc in 0..c {
                for k in 0..u {
                    for (rising, s) in [(true, 2.0), (false, 3.0)] {
                        for y in 0..h {
                            for x in 0..w {
                                let i = (((bb * c + cc) * (u * u) + angular(k, rising)) * h + y) * w + x;
                                want[i] += s * data[i];
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(bits(out.tensor()), want.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), "scatter U={u}");
        // Every angular position off both diagonals stayed exactly zero.
        let on: Vec<bool> = (0..u * u)
            .map(|a| (0..u).any(|k| a == angular(k, true) || a == angular(k, false)))
            .collect();
        let od = out.tensor().data();
        for (i, x) in od.iter().enumerate() {
            let a = i / (h * w) % (u * u);
            if !on[a] {
                assert_eq!(*x, 0.0, "off-diagonal U={u} angular {a}");
            }
        }
    }
    gate(
        "criterion 2 (geometry oracle)",
        true,
        format!(
            "{trips} horizontal/vertical/macro-pixel round trips over 200 random shapes bit-exact; \
             diagonal gather+scatter match the index oracle for U in {{1,2,3,5}}; off-diagonal zeros exact"
        ),
    );
}

#[test]
fn c03_gradient_suite() {
    let mut worst = (0.0f64, "", 0u64);
    let mut checks = 0usize;
    for seed in 0..5 {
        for r in block_grad_suite(seed, 12).unwrap() {
            checks += 1;
            if r.report.max_rel_err > worst.0 {
                worst = (r.report.max_rel_err, r.name, seed);
            }
        }
    }
    gate(
        "criterion 3 (gradient suite)",
        worst.0 < 1e-4,
        format!(
            "{checks} finite-difference checks (10 block families x 5 seeds, 64-bit): \
             worst rel err {:.3e} ({} at seed {})",
            worst.0, worst.1, worst.2
        ),
    );
}

#[test]
fn c04_identity_at_zero() {
    let cfg = ModelConfig::preset("nano").unwrap();
    let mut worst = 0.0f64;
    for (h, w, seed) in [(12, 10, 40), (7, 9, 41)] {
        let mut model = GtfModel::<f64>::new(&cfg, seed).unwrap();
        model.zero_residual_paths();
        let lf = random_lf(1, 1, 3, 3, h, w, seed + 100);
        let out = model.forward_y(&lf, &mut Mode::Eval).unwrap();
        let bicubic = lf.tensor().bicubic2d(Scale::Up(cfg.scale)).unwrap();
        worst = worst.max(max_abs_diff(out.tensor().data(), bicubic.data()));
    }
    gate(
        "criterion 4 (identity at zero)",
        worst == 0.0,
        format!("zeroed residual paths reduce the forward pass to bicubic; max abs diff {worst:e} over 2 shapes (64-bit)"),
    );
}

#[test]
fn c05_slope_disparity() {
    let mut lines = Vec::new();
    let mut ok = true;
    for d in [0.0, 1.0, 2.0] {
        let (hr, _) = slope_probe(5, 5, 32, 32, d, 94).render::<f64>(1).unwrap();
        let r = gtf_core::eval::verify_epi_slope(&hr, 4).unwrap();
        ok &= r.horizontal == d && r.vertical == d && r.diag45 == Some(d) && r.diag135 == Some(d);
        lines.push(format!(
            "d={d}: h={} v={} d45={} d135={}",
            r.horizontal,
            r.vertical,
            r.diag45.unwrap(),
            r.diag135.unwrap()
        ));
    }
    gate(
        "criterion 5 (slope-disparity)",
        ok,
        format!("measured per-axis view shifts equal the scene disparity in all four directions ({})", lines.join("; ")),
    );
}

fn quick_train_cfg(steps_per_epoch: usize, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 2e-3,
        step_size: 1000,
        gamma: 0.5,
        batch: 4,
        patch: 16,
        epochs,
        steps_per_epoch,
        loss: LossKind::L1,
        ohem_k: 0.8,
        charbonnier_eps: 1e-3,
        ema_decay: 0.9,
        seed,
    }
}

fn bicubic_psnr(lr: &LightField<f32>, hr: &LightField<f32>, scale: usize) -> f64 {
    let up = lr.with_tensor(lr.tensor().bicubic2d(Scale::Up(scale)).unwrap()).unwrap();
    psnr_y(&up, hr).unwrap().mean
}

#[test]
fn c06_learning_signal() {
    let cfg = ModelConfig::preset("nano").unwrap();
    let (hr, lr) = textured_scene(3, 3, 32, 32, &[1.0], 6).render::<f32>(2).unwrap();
    let baseline = bicubic_psnr(&lr, &hr, 2);
    let data = TrainData { train: vec![(lr.clone(), hr.clone())], val: vec![(lr, hr)] };
    let tcfg = quick_train_cfg(20, 10, 3);
    let mut sink = Vec::new();
    let out = train_loop(&cfg, &tcfg, &data, None, &mut sink).unwrap();
    assert!(!out.aborted);
    let ok = out.final_loss < 0.5 * out.initial_loss && out.best_psnr >= baseline + 3.0;
    gate(
        "criterion 6 (learning signal)",
        ok,
        format!(
            "nano overfit of one synthetic field, {} steps: loss {:.4} -> {:.4} ({:.2}x), \
             best val PSNR {:.2} dB vs bicubic {:.2} dB ({:+.2} dB, need >= +3)",
            out.steps,
            out.initial_loss,
            out.final_loss,
            out.final_loss / out.initial_loss,
            out.best_psnr,
            baseline,
            out.best_psnr - baseline
        ),
    );
}

#[test]
fn c07_ablation_direction() {
    let cfg_full = ModelConfig::preset("nano").unwrap();
    // The closest same-budget config without the diagonal branch and
    // adaptive fusion: the freed parameters go back into width.
    let mut cfg_bare = cfg_full.clone();
    cfg_bare.name = "nano_no_diag".to_string();
    cfg_bare.use_diagonal = false;
    cfg_bare.fusion_adaptive = false;
    cfg_bare.channels = 10;
    cfg_bare.ffn_ratio = 3;
    cfg_bare.validate().unwrap();
    let (pf, pb) = (count_params(&cfg_full), count_params(&cfg_bare));

    // Single-layer pure-shift scenes: at scale 2 and unit disparity the
    // joint-parity sampling phase is carried one attention hop away along
    // the diagonal view sequences, which is the structure the diagonal
    // branch exists to exploit.
    let train: Vec<_> = [(1.0, 20u64), (2.0, 21)]
        .iter()
        .map(|(d, s)| textured_scene(3, 3, 24, 24, &[*d], *s).render::<f32>(2).unwrap())
        .map(|(hr, lr)| (lr, hr))
        .collect();
    let (vhr, vlr) = textured_scene(3, 3, 24, 24, &[1.0], 22).render::<f32>(2).unwrap();
    let data = TrainData { train, val: vec![(vlr, vhr)] };

    let run = |cfg: &ModelConfig, seed: u64| -> f64 {
        let mut tcfg = quick_train_cfg(30, 8, seed);
        tcfg.patch = 8;
        let mut sink = Vec::new();
        let out = train_loop(cfg, &tcfg, &data, None, &mut sink).unwrap();
        assert!(!out.aborted);
        out.final_psnr
    };

    let mut wins = 0usize;
    let mut deltas = Vec::new();
    for seed in 0..5u64 {
        let a = run(&cfg_full, seed);
        let b = run(&cfg_bare, seed);
        if a >= b {
            wins += 1;
        }
        deltas.push(format!("seed {seed}: {:+.3} dB", a - b));
    }
    gate(
        "criterion 7 (ablation direction)",
        wins >= 3,
        format!(
            "diagonal branch + adaptive fusion ({pf} params) vs stripped same-budget model \
             ({pb} params, wider), 240 steps each: wins {wins}/5 [{}]",
            deltas.join(", ")
        ),
    );
}

#[test]
fn c08_inference_stack() {
    // Partition of unity, audited through the real blend path: a constant
    // field tiled under both windows must come back exactly constant.
    let bicubic = |lf: &LightField<f64>| -> Result<LightField<f64>> {
        lf.with_tensor(lf.tensor().bicubic2d(Scale::Up(2))?)
    };
    let mut unity = 0.0f64;
    for window in [BlendWindow::Hann, BlendWindow::Uniform] {
        let spec = TileSpec { patch: 8, stride: 5, window };
        let den = blend_weight_map(&spec, 20, 28, 2).unwrap();
        assert!(den.iter().all(|d| *d > 0.0 && d.is_finite()));
        let ones = LightField::new(Tensor::<f64>::full(1.0, &[1, 1, 9, 20, 28]), 3, 3).unwrap();
        let out = epsw_infer(&bicubic, &ones, &spec).unwrap();
        unity = unity.max(out.tensor().data().iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max));
    }

    // A linear model tiled with context rims equals its full-frame output.
    let lf = random_lf(1, 1, 3, 3, 20, 28, 80);
    let spec = TileSpec { patch: 8, stride: 5, window: BlendWindow::Hann };
    let tiled = epsw_infer(&bicubic, &lf, &spec).unwrap();
    let direct = bicubic(&lf).unwrap();
    let linear = max_abs_diff(tiled.tensor().data(), direct.tensor().data());

    // The symmetry group table: composition and inverses, bit-exact.
    let probe = random_lf(1, 1, 3, 3, 5, 6, 81);
    for g1 in Dihedral::all() {
        for g2 in Dihedral::all() {
            let composed = g1.then(g2).apply(&probe).unwrap();
            let sequential = g2.apply(&g1.apply(&probe).unwrap()).unwrap();
            assert_eq!(bits(composed.tensor()), bits(sequential.tensor()), "{g1:?} then {g2:?}");
        }
        let back = g1.inverse().apply(&g1.apply(&probe).unwrap()).unwrap();
        assert_eq!(bits(back.tensor()), bits(probe.tensor()), "{g1:?} inverse");
    }

    // Ensembled inference on a trained model never loses more than 0.05 dB.
    let cfg = ModelConfig::preset("nano").unwrap();
    let (thr, tlr) = textured_scene(3, 3, 32, 32, &[1.0], 25).render::<f32>(2).unwrap();
    let (vhr, vlr) = textured_scene(3, 3, 32, 32, &[0.0, 1.0], 26).render::<f32>(2).unwrap();
    let data = TrainData { train: vec![(tlr, thr)], val: vec![(vlr.clone(), vhr.clone())] };
    let mut sink = Vec::new();
    let out = train_loop(&cfg, &quick_train_cfg(20, 4, 8), &data, None, &mut sink).unwrap();
    let model = out.best.build_model(WeightSet::Ema).unwrap();
    let base = |lf: &LightField<f32>| -> Result<LightField<f32>> {
        no_grad(|| model.forward_y(lf, &mut Mode::Eval))
    };
    let plain = psnr_y(&base(&vlr).unwrap(), &vhr).unwrap().mean;
    let spec = TileSpec { patch: 8, stride: 4, window: BlendWindow::Hann };
    let tiled = |lf: &LightField<f32>| epsw_infer(&base, lf, &spec);
    let (ens, folds) = tta_infer(&tiled, &vlr).unwrap();
    let epsw_tta = psnr_y(&ens, &vhr).unwrap().mean;
    let delta = epsw_tta - plain;

    gate(
        "criterion 8 (inference stack)",
        unity <= 1e-6 && linear <= 1e-6 && delta >= -0.05,
        format!(
            "partition of unity {unity:.2e}; tiled linear model vs direct {linear:.2e}; \
             64 symmetry compositions + 8 inverses bit-exact; \
             ensembled ({folds}-fold, overlap-blended) vs plain on the validation scene: {delta:+.3} dB ({})",
            if delta >= 0.0 { "improves" } else { "within tolerance" }
        ),
    );
}

#[test]
fn c09_loss_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let shape = [1usize, 1, 2, 6, 7];
    let n: usize = shape.iter().product();
    let pred = Tensor::<f64>::rand_uniform(&shape, -1.0, 1.0, &mut rng);
    let target = Tensor::<f64>::rand_uniform(&shape, -1.0, 1.0, &mut rng);
    let ohem = charbonnier_ohem(&pred, &target, 1.0, 1e-8).unwrap().item().unwrap();
    let l1 = l1_loss(&pred, &target).unwrap().item().unwrap();
    let gap = (ohem - l1).abs();

    let mut supports = Vec::new();
    let mut ok = gap <= 1e-6;
    for &k in &[0.5, 0.8, 1.0] {
        let p = pred.detach().var();
        let loss = charbonnier_ohem(&p, &target, k, 1e-3).unwrap();
        let grads = backward(&loss).unwrap();
        let nz = grads.get(&p).unwrap().iter().filter(|g| **g != 0.0).count();
        let want = (k * n as f64).ceil() as usize;
        ok &= nz == want;
        supports.push(format!("k={k}: {nz}/{want}"));
    }
    gate(
        "criterion 9 (loss semantics)",
        ok,
        format!(
            "mined Charbonnier at k=1, eps=1e-8 matches L1 within {gap:.1e}; \
             gradient support over {n} pixels [{}]",
            supports.join(", ")
        ),
    );
}

#[test]
fn c10_determinism() {
    let run = |tag: usize| -> (Vec<u8>, Vec<u8>, Vec<u64>) {
        let cfg = ModelConfig::preset("nano").unwrap();
        let (thr, tlr) = textured_scene(3, 3, 24, 24, &[1.0], 1).render::<f32>(2).unwrap();
        let (vhr, vlr) = textured_scene(3, 3, 24, 24, &[0.0], 2).render::<f32>(2).unwrap();
        let data = TrainData { train: vec![(tlr, thr)], val: vec![(vlr.clone(), vhr)] };
        let mut tcfg = quick_train_cfg(10, 3, 12);
        tcfg.batch = 2;
        tcfg.patch = 8;
        tcfg.lr = 1e-3;
        let mut log = Vec::new();
        let out = train_loop(&cfg, &tcfg, &data, None, &mut log).unwrap();

        let path = std::env::temp_dir().join(format!("gtf_acceptance_c10_{tag}.ckpt"));
        out.last.save(&path).unwrap();
        let ckpt_bytes = std::fs::read(&path).unwrap();
        std::fs::remove_file(&path).ok();

        let model = out.best.build_model(WeightSet::Ema).unwrap();
        let base = |lf: &LightField<f32>| -> Result<LightField<f32>> {
            no_grad(|| model.forward_y(lf, &mut Mode::Eval))
        };
        let spec = TileSpec { patch: 8, stride: 4, window: BlendWindow::Hann };
        let tiled = |lf: &LightField<f32>| epsw_infer(&base, lf, &spec);
        let (ens, _) = tta_infer(&tiled, &vlr).unwrap();
        (log, ckpt_bytes, bits(ens.tensor()))
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = pool.install(|| run(1));
    let b = pool.install(|| run(2));
    let ok = a == b;
    gate(
        "criterion 10 (determinism)",
        ok,
        format!(
            "two fixed-seed single-thread train+ensemble-infer runs bit-identical: \
             {} log bytes, {} checkpoint bytes, {} output values",
            a.0.len(),
            a.1.len(),
            a.2.len()
        ),
    );
}
