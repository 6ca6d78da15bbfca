//! The training loop: batch assembly, loss, optimizer, EMA, per-epoch
//! validation, checkpoints, and the metrics log.
//!
//! Every step seeds its own RNG stream from (seed, step), so a run resumed
//! from a checkpoint draws the same patches, augmentations, and stochastic
//! depth masks as the uninterrupted run and continues its loss curve
//! exactly.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::augment_lf;
use super::config::{LossKind, TrainConfig};
use super::loss::{charbonnier_ohem, l1_loss};
use super::optim::{steplr, Adam, Ema};
use crate::blocks::Mode;
use crate::error::{Error, Result};
use crate::eval::metrics::{format_db, psnr_y};
use crate::geometry::LightField;
use crate::model::{Checkpoint, GtfModel, ModelConfig, WeightSet};
use crate::tensor::autodiff::{backward, no_grad};
use crate::tensor::{Elem, Tensor};

/// Paired (low, high) resolution scenes; one luma channel, batch 1 each.
pub struct TrainData<E: Elem> {
    pub train: Vec<(LightField<E>, LightField<E>)>,
    pub val: Vec<(LightField<E>, LightField<E>)>,
}

pub struct TrainOutcome<E: Elem> {
    /// State at the last completed step.
    pub last: Checkpoint<E>,
    /// The EMA weights that scored the best validation PSNR (the final
    /// state when no validation ran).
    pub best: Checkpoint<E>,
    pub best_psnr: f64,
    pub final_psnr: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: u64,
    pub skipped_steps: u64,
    /// True when a non-finite loss stopped the run early; `last` then holds
    /// the state before the poisoned step.
    pub aborted: bool,
}

fn log_err(e: std::io::Error) -> Error {
    Error::io("<metrics log>", e)
}

/// One RNG per step, derived from the seed: resumable and order-stable.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_add(1));
    rng
}

/// Runs evaluation with the EMA shadow swapped into the model.
fn with_shadow<E: Elem, R>(
    model: &mut GtfModel<E>,
    shadow: &BTreeMap<String, Vec<E>>,
    f: impl FnOnce(&GtfModel<E>) -> Result<R>,
) -> Result<R> {
    let mut saved: Vec<Vec<E>> = Vec::new();
    model.visit_mut("", &mut |name, p| {
        if let Some(s) = shadow.get(name) {
            saved.push(p.data().to_vec());
            p.set_data(s.clone()).expect("shadow buffers mirror parameter shapes");
        }
    });
    let out = f(model);
    let mut it = saved.into_iter();
    model.visit_mut("", &mut |name, p| {
        if shadow.contains_key(name) {
            let original = it.next().expect("one saved buffer per shadowed parameter");
            p.set_data(original).expect("restoring the exact buffer that was saved");
        }
    });
    out
}

fn mean_val_psnr<E: Elem>(
    model: &GtfModel<E>,
    scenes: &[(LightField<E>, LightField<E>)],
) -> Result<f64> {
    let mut acc = 0.0;
    for (lr, hr) in scenes {
        let pred = no_grad(|| model.forward_y(lr, &mut Mode::Eval))?;
        acc += psnr_y(&pred, hr)?.mean;
    }
    Ok(acc / scenes.len() as f64)
}

fn tensor_map_to_vecs<E: Elem>(
    src: &BTreeMap<String, Tensor<E>>,
    model: &GtfModel<E>,
    what: &'static str,
) -> Result<BTreeMap<String, Vec<E>>> {
    let mut sizes = BTreeMap::new();
    model.visit("", &mut |name, p| {
        sizes.insert(name.to_string(), p.numel());
    });
    src.iter()
        .map(|(name, t)| {
            if sizes.get(name.as_str()) != Some(&t.numel()) {
                return Err(Error::Format {
                    what: "checkpoint",
                    msg: format!("{what} entry '{name}' does not match the model"),
                });
            }
            Ok((name.clone(), t.data().to_vec()))
        })
        .collect()
}

pub fn train_loop<E: Elem>(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &TrainData<E>,
    resume: Option<&Checkpoint<E>>,
    log: &mut dyn Write,
) -> Result<TrainOutcome<E>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::contract("train_loop", "no training scenes"));
    }

    let (mut model, mut adam, mut ema, start_step) = match resume {
        Some(cp) => {
            let model = cp.build_model(WeightSet::Raw)?;
            let m = tensor_map_to_vecs(&cp.adam_m, &model, "adam_m")?;
            let v = tensor_map_to_vecs(&cp.adam_v, &model, "adam_v")?;
            let shadow = tensor_map_to_vecs(&cp.ema, &model, "ema")?;
            let adam = Adam::with_state(cp.step, m, v);
            let ema = Ema::with_state(cfg.ema_decay, shadow);
            (model, adam, ema, cp.step)
        }
        None => {
            model_cfg.validate()?;
            let model = GtfModel::new(model_cfg, cfg.seed)?;
            let ema = Ema::new(cfg.ema_decay, &model);
            (model, Adam::new(), ema, 0)
        }
    };
    let scale = model.config().scale;

    let mut patch = cfg.patch;
    for (lr, hr) in data.train.iter().chain(data.val.iter()) {
        if lr.batch() != 1 || lr.channels() != 1 {
            return Err(Error::contract("train_loop", "scenes must be single luma fields"));
        }
        if hr.height() != lr.height() * scale || hr.width() != lr.width() * scale {
            return Err(Error::contract(
                "train_loop",
                format!(
                    "scene pair {}x{} -> {}x{} does not match scale {scale}",
                    lr.height(),
                    lr.width(),
                    hr.height(),
                    hr.width()
                ),
            ));
        }
        patch = patch.min(lr.height()).min(lr.width());
    }

    let spe = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        data.train.len().div_ceil(cfg.batch).max(1)
    } as u64;
    let total_steps = spe * cfg.epochs as u64;

    let snapshot = |model: &GtfModel<E>, step: u64, ema: &Ema<E>, adam: &Adam<E>| {
        let (m, v) = adam.moments();
        Checkpoint::from_model(model, step, ema.shadow(), m, v)
            .map(|cp| cp.with_train_lines(cfg.to_kv_lines()))
    };

    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut best_psnr = f64::NEG_INFINITY;
    let mut final_psnr = f64::NAN;
    let mut best: Option<Checkpoint<E>> = None;

    for step in start_step..total_steps {
        let epoch = (step / spe) as usize;
        let lr_now = steplr(cfg.lr, epoch, cfg.step_size, cfg.gamma);
        let mut rng = step_rng(cfg.seed, step);

        let mut lr_patches = Vec::with_capacity(cfg.batch);
        let mut hr_patches = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let (lr_scene, hr_scene) = &data.train[rng.random_range(0..data.train.len())];
            let y0 = rng.random_range(0..=lr_scene.height() - patch);
            let x0 = rng.random_range(0..=lr_scene.width() - patch);
            let lr_t = lr_scene.tensor().slice(3, y0, patch)?.slice(4, x0, patch)?;
            let hr_t = hr_scene
                .tensor()
                .slice(3, y0 * scale, patch * scale)?
                .slice(4, x0 * scale, patch * scale)?;
            let lr_p = lr_scene.with_tensor(lr_t)?;
            let hr_p = hr_scene.with_tensor(hr_t)?;
            let (lr_p, hr_p) = augment_lf(&lr_p, &hr_p, &mut rng)?;
            lr_patches.push(lr_p.into_tensor());
            hr_patches.push(hr_p.into_tensor());
        }
        let lr_refs: Vec<&Tensor<E>> = lr_patches.iter().collect();
        let hr_refs: Vec<&Tensor<E>> = hr_patches.iter().collect();
        let lr_batch = LightField::new(
            Tensor::concat(&lr_refs, 0)?,
            data.train[0].0.u(),
            data.train[0].0.v(),
        )?;
        let target = Tensor::concat(&hr_refs, 0)?;

        let pred = model.forward_y(&lr_batch, &mut Mode::Train { rng: &mut rng })?;
        let loss = match cfg.loss {
            LossKind::L1 => l1_loss(pred.tensor(), &target)?,
            LossKind::Ohem => {
                charbonnier_ohem(pred.tensor(), &target, cfg.ohem_k, cfg.charbonnier_eps)?
            }
        };
        let loss_value = loss.item()?.as_f64();
        if !loss_value.is_finite() {
            // Parameters still hold the last finite step's values.
            writeln!(log, "{},{},{},nan,", step, epoch, lr_now).map_err(log_err)?;
            let last = snapshot(&model, step, &ema, &adam)?;
            let best = match best {
                Some(b) => b,
                None => snapshot(&model, step, &ema, &adam)?,
            };
            return Ok(TrainOutcome {
                last,
                best,
                best_psnr,
                final_psnr,
                initial_loss,
                final_loss,
                steps: step,
                skipped_steps: adam.skipped(),
                aborted: true,
            });
        }
        if initial_loss.is_nan() {
            initial_loss = loss_value;
        }
        final_loss = loss_value;

        let grads = backward(&loss)?;
        adam.step(&mut model, &grads, lr_now)?;
        ema.update(&model);

        let epoch_done = (step + 1) % spe == 0;
        let mut val_col = String::new();
        if epoch_done && !data.val.is_empty() {
            let psnr =
                with_shadow(&mut model, ema.shadow(), |m| mean_val_psnr(m, &data.val))?;
            final_psnr = psnr;
            val_col = format_db(psnr);
            if psnr > best_psnr {
                best_psnr = psnr;
                best = Some(snapshot(&model, step + 1, &ema, &adam)?);
            }
        }
        writeln!(log, "{},{},{},{},{}", step, epoch, lr_now, loss_value, val_col)
            .map_err(log_err)?;
    }

    let last = snapshot(&model, total_steps, &ema, &adam)?;
    let best = match best {
        Some(b) => b,
        None => snapshot(&model, total_steps, &ema, &adam)?,
    };
    Ok(TrainOutcome {
        last,
        best,
        best_psnr,
        final_psnr,
        initial_loss,
        final_loss,
        steps: total_steps,
        skipped_steps: adam.skipped(),
        aborted: false,
    })
}
