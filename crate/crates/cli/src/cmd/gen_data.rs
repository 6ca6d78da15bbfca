//! Synthetic dataset generation: layered scenes with known integer
//! disparities, saved as paired LR/HR bundles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gtf_core::eval::textured_scene;
use gtf_core::io::{save_bundle, BundleFormat};
use gtf_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::GenDataArgs;

pub fn run(args: GenDataArgs) -> Result<u8> {
    let format = BundleFormat::parse(&args.format)?;
    if args.scenes == 0 || args.layers == 0 {
        return Err(Error::Contract {
            op: "gen_data",
            msg: "need at least one scene and one layer".into(),
        });
    }
    if args.height % args.scale != 0 || args.width % args.scale != 0 {
        return Err(Error::Contract {
            op: "gen_data",
            msg: format!(
                "{}x{} not divisible by scale {}",
                args.height, args.width, args.scale
            ),
        });
    }

    let mut manifest = RunManifest::new("gen-data");
    manifest.seed(args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    for i in 0..args.scenes {
        // Integer disparities keep every scene's EPI slopes measurable.
        let disparities: Vec<f64> =
            (0..args.layers).map(|_| rng.random_range(0..3) as f64).collect();
        let scene_seed = rng.random::<u64>();
        let scene =
            textured_scene(args.u, args.v, args.height, args.width, &disparities, scene_seed);
        let (hr, lr) = scene.render::<f32>(args.scale)?;

        let dir = args.out.join(format!("scene_{i:03}"));
        save_bundle(&dir.join("hr"), &hr, format)?;
        save_bundle(&dir.join("lr"), &lr, format)?;

        let d_list: Vec<String> = disparities.iter().map(|d| d.to_string()).collect();
        let info = format!(
            "GTFS 1\nseed {scene_seed}\nscale {}\ndisparities {}\n",
            args.scale,
            d_list.join(",")
        );
        let info_path = dir.join("scene.txt");
        std::fs::write(&info_path, info)
            .map_err(|e| Error::Io { path: info_path, source: e })?;
        manifest.output(&dir);
        println!(
            "scene_{i:03}: {}x{} views {}x{} HR, disparities [{}]",
            args.u,
            args.v,
            args.height,
            args.width,
            d_list.join(",")
        );
    }

    manifest.config(vec![
        format!("u={}", args.u),
        format!("v={}", args.v),
        format!("height={}", args.height),
        format!("width={}", args.width),
        format!("scale={}", args.scale),
        format!("layers={}", args.layers),
        format!("scenes={}", args.scenes),
        format!("format={}", format.name()),
    ]);
    manifest.write(&args.out)?;
    Ok(0)
}
