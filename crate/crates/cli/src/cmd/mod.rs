//! One module per subcommand plus shared bundle helpers.

pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod infer;
pub mod inspect;
pub mod train;

use std::path::{Path, PathBuf};

use gtf_core::eval::color::rgb_to_ycbcr;
use gtf_core::geometry::LightField;
use gtf_core::io::load_bundle;
use gtf_core::{Elem, Error, Result};

/// Loads a bundle and reduces it to the luma channel the model consumes.
pub fn load_luma<E: Elem>(dir: &Path) -> Result<LightField<E>> {
    let lf = load_bundle::<E>(dir)?;
    match lf.channels() {
        1 => Ok(lf),
        3 => {
            let (y, _, _) = rgb_to_ycbcr(lf.tensor())?;
            lf.with_tensor(y)
        }
        c => Err(Error::Contract {
            op: "load_luma",
            msg: format!("expected 1 or 3 channels, bundle has {c}"),
        }),
    }
}

/// Scene directories of a dataset: sorted subdirectories holding lr/ + hr/.
pub fn scene_dirs(data: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(data).map_err(|e| Error::Io {
        path: data.to_path_buf(),
        source: e,
    })?;
    let mut dirs = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::Io { path: data.to_path_buf(), source: e })?;
        let p = entry.path();
        if p.join("lr").is_dir() && p.join("hr").is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Contract {
            op: "scene_dirs",
            msg: format!("no scene directories with lr/ and hr/ under {}", data.display()),
        });
    }
    Ok(dirs)
}
