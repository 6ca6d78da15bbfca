//! Training entry point: dataset loading, config layering, the training
//! loop, and checkpoint/log placement.

use std::fs::OpenOptions;
use std::io::BufWriter;

use gtf_core::model::Checkpoint;
use gtf_core::train::{train_loop, TrainData};
use gtf_core::{Error, Result};

use crate::cfgstack;
use crate::cmd::{load_luma, scene_dirs};
use crate::manifest::RunManifest;
use crate::TrainArgs;

pub fn run(args: TrainArgs) -> Result<u8> {
    let mut stack = cfgstack::resolve(&args.preset, args.config.as_deref(), &args.sets)?;
    if let Some(seed) = args.seed {
        stack.train.seed = seed;
    }

    let dirs = scene_dirs(&args.data)?;
    let mut scenes = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let lr = load_luma::<f32>(&dir.join("lr"))?;
        let hr = load_luma::<f32>(&dir.join("hr"))?;
        if lr.u() != stack.model.u || lr.v() != stack.model.v {
            return Err(Error::Contract {
                op: "train",
                msg: format!(
                    "{}: {}x{} views do not match the model's {}x{} grid",
                    dir.display(),
                    lr.u(),
                    lr.v(),
                    stack.model.u,
                    stack.model.v
                ),
            });
        }
        scenes.push((lr, hr));
    }
    // Hold out the last scene for validation when there is more than one.
    let data = if scenes.len() >= 2 {
        let val = vec![scenes.pop().unwrap()];
        TrainData { train: scenes, val }
    } else {
        TrainData { train: scenes.clone(), val: scenes }
    };
    println!(
        "training on {} scene(s), validating on {}",
        data.train.len(),
        data.val.len()
    );

    let resume = match &args.resume {
        Some(path) => Some(Checkpoint::<f32>::load(path)?),
        None => None,
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Io { path: args.out.clone(), source: e })?;
    let log_path = args.out.join("metrics.log");
    let log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .truncate(false)
        .open(&log_path)
        .map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
    let mut log = BufWriter::new(log_file);

    let outcome = train_loop(&stack.model, &stack.train, &data, resume.as_ref(), &mut log)?;
    drop(log);

    let last_path = args.out.join("last.ckpt");
    let best_path = args.out.join("best.ckpt");
    outcome.last.save(&last_path)?;
    outcome.best.save(&best_path)?;

    let mut manifest = RunManifest::new("train");
    manifest.seed(stack.train.seed);
    manifest.config(stack.manifest_lines());
    manifest.output(&last_path);
    manifest.output(&best_path);
    manifest.output(&log_path);
    manifest.write(&args.out)?;

    println!(
        "{} steps, loss {:.6} -> {:.6}, best val PSNR {:.4} dB, {} skipped",
        outcome.steps, outcome.initial_loss, outcome.final_loss, outcome.best_psnr,
        outcome.skipped_steps
    );
    if outcome.aborted {
        eprintln!("training aborted on a non-finite loss; last good state saved");
        return Ok(3);
    }
    Ok(0)
}
