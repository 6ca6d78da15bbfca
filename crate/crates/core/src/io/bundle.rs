//! Light-field bundles on disk: one image per sub-aperture view plus a
//! text manifest tying (u,v) to filenames. Pixel values are [0,1] floats
//! quantized to the chosen bit depth.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer};

use crate::error::{Error, Result};
use crate::geometry::LightField;
use crate::tensor::{Elem, Tensor};

pub const MANIFEST_NAME: &str = "views.txt";
const MAGIC: &str = "GTFB 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundleFormat {
    Pgm8,
    Pgm16,
    Png8,
    Png16,
}

impl BundleFormat {
    pub fn name(self) -> &'static str {
        match self {
            BundleFormat::Pgm8 => "pgm8",
            BundleFormat::Pgm16 => "pgm16",
            BundleFormat::Png8 => "png8",
            BundleFormat::Png16 => "png16",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pgm8" => Ok(BundleFormat::Pgm8),
            "pgm16" => Ok(BundleFormat::Pgm16),
            "png8" => Ok(BundleFormat::Png8),
            "png16" => Ok(BundleFormat::Png16),
            other => Err(bundle_err(format!(
                "unknown format '{other}' (expected pgm8|pgm16|png8|png16)"
            ))),
        }
    }

    fn extension(self) -> &'static str {
        match self {
            BundleFormat::Pgm8 | BundleFormat::Pgm16 => "pgm",
            BundleFormat::Png8 | BundleFormat::Png16 => "png",
        }
    }

    fn sixteen_bit(self) -> bool {
        matches!(self, BundleFormat::Pgm16 | BundleFormat::Png16)
    }

    fn supports_rgb(self) -> bool {
        matches!(self, BundleFormat::Png8 | BundleFormat::Png16)
    }
}

fn bundle_err(msg: impl Into<String>) -> Error {
    Error::Format { what: "bundle", msg: msg.into() }
}

fn image_err(path: &Path, e: impl ToString) -> Error {
    Error::Image { path: path.to_path_buf(), msg: e.to_string() }
}

fn view_filename(iu: usize, iv: usize, ext: &str) -> String {
    format!("view_u{iu:02}_v{iv:02}.{ext}")
}

/// Writes one image per view plus the manifest. The field must be batch 1
/// with 1 channel (any format) or 3 channels (PNG only).
pub fn save_bundle<E: Elem>(
    dir: &Path,
    lf: &LightField<E>,
    format: BundleFormat,
) -> Result<()> {
    if lf.batch() != 1 {
        return Err(Error::contract("save_bundle", "bundles hold a single field"));
    }
    let c = lf.channels();
    if c != 1 && !(c == 3 && format.supports_rgb()) {
        return Err(Error::contract(
            "save_bundle",
            format!("{} channels not representable as {}", c, format.name()),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (h, w, views) = (lf.height(), lf.width(), lf.views());
    let plane = h * w;
    let data = lf.tensor().data();
    let max = if format.sixteen_bit() { 65535.0 } else { 255.0 };
    let code = |v: E| (v.as_f64().clamp(0.0, 1.0) * max).round() as u16;

    let manifest_path = dir.join(MANIFEST_NAME);
    let mut manifest = BufWriter::new(
        File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?,
    );
    let head = format!(
        "{MAGIC}\nu {}\nv {}\nheight {h}\nwidth {w}\nchannels {c}\nformat {}\n",
        lf.u(),
        lf.v(),
        format.name()
    );
    manifest
        .write_all(head.as_bytes())
        .map_err(|e| Error::io(&manifest_path, e))?;

    for a in 0..views {
        let iu = a / lf.v();
        let iv = a % lf.v();
        let name = view_filename(iu, iv, format.extension());
        let path = dir.join(&name);
        let mut samples = Vec::with_capacity(plane * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    samples.push(code(data[(ch * views + a) * plane + y * w + x]));
                }
            }
        }
        let (wu, hu) = (w as u32, h as u32);
        let img = match (c, format.sixteen_bit()) {
            (1, false) => DynamicImage::ImageLuma8(
                ImageBuffer::from_raw(wu, hu, samples.iter().map(|&s| s as u8).collect())
                    .expect("buffer sized to w*h"),
            ),
            (1, true) => DynamicImage::ImageLuma16(
                ImageBuffer::from_raw(wu, hu, samples).expect("buffer sized to w*h"),
            ),
            (3, false) => DynamicImage::ImageRgb8(
                ImageBuffer::from_raw(wu, hu, samples.iter().map(|&s| s as u8).collect())
                    .expect("buffer sized to 3*w*h"),
            ),
            (3, true) => DynamicImage::ImageRgb16(
                ImageBuffer::from_raw(wu, hu, samples).expect("buffer sized to 3*w*h"),
            ),
            _ => unreachable!("channel count validated above"),
        };
        img.save(&path).map_err(|e| image_err(&path, e))?;
        writeln!(manifest, "{iu} {iv} {name}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))
}

struct Manifest {
    u: usize,
    v: usize,
    height: usize,
    width: usize,
    channels: usize,
    format: BundleFormat,
    rows: Vec<(usize, usize, String)>,
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<String> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io(&path, e)),
            None => Err(bundle_err("manifest ended early")),
        }
    };
    if next()? != MAGIC {
        return Err(bundle_err("bad magic; not a bundle manifest"));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = next()?;
        line.strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bundle_err(format!("expected '{key} ...', got '{line}'")))
    };
    let parse_num = |key: &str, s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| bundle_err(format!("bad {key} value '{s}'")))
    };
    let u = parse_num("u", field("u")?)?;
    let v = parse_num("v", field("v")?)?;
    let height = parse_num("height", field("height")?)?;
    let width = parse_num("width", field("width")?)?;
    let channels = parse_num("channels", field("channels")?)?;
    let format = BundleFormat::parse(&field("format")?)?;
    if u * v == 0 || height == 0 || width == 0 {
        return Err(bundle_err("empty grid or views"));
    }
    if channels != 1 && channels != 3 {
        return Err(bundle_err(format!("unsupported channel count {channels}")));
    }

    let mut rows = Vec::with_capacity(u * v);
    for line in lines {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ' ');
        let (iu, iv, name) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(n)) => (
                parse_num("view u", a.to_string())?,
                parse_num("view v", b.to_string())?,
                n.to_string(),
            ),
            _ => return Err(bundle_err(format!("bad view row '{line}'"))),
        };
        if iu >= u || iv >= v {
            return Err(bundle_err(format!("view ({iu},{iv}) outside {u}x{v} grid")));
        }
        rows.push((iu, iv, name));
    }
    Ok(Manifest { u, v, height, width, channels, format, rows })
}

/// Reads a bundle directory back into a light field; every view of the
/// grid must be listed exactly once and match the manifest's geometry.
pub fn load_bundle<E: Elem>(dir: &Path) -> Result<LightField<E>> {
    let m = read_manifest(dir)?;
    let views = m.u * m.v;
    let plane = m.height * m.width;
    let mut seen = vec![false; views];
    let mut data = vec![E::from_f64(0.0); m.channels * views * plane];

    for (iu, iv, name) in &m.rows {
        let a = iu * m.v + iv;
        if seen[a] {
            return Err(bundle_err(format!("view ({iu},{iv}) listed twice")));
        }
        seen[a] = true;
        let path = dir.join(name);
        let img = image::open(&path).map_err(|e| image_err(&path, e))?;
        let (iw, ih) = (img.width() as usize, img.height() as usize);
        if (ih, iw) != (m.height, m.width) {
            return Err(bundle_err(format!(
                "{name}: {ih}x{iw} does not match manifest {}x{}",
                m.height, m.width
            )));
        }
        let samples: Vec<f64> = match (img, m.channels, m.format.sixteen_bit()) {
            (DynamicImage::ImageLuma8(b), 1, false) => {
                b.into_raw().iter().map(|&s| s as f64 / 255.0).collect()
            }
            (DynamicImage::ImageLuma16(b), 1, true) => {
                b.into_raw().iter().map(|&s| s as f64 / 65535.0).collect()
            }
            (DynamicImage::ImageRgb8(b), 3, false) => {
                b.into_raw().iter().map(|&s| s as f64 / 255.0).collect()
            }
            (DynamicImage::ImageRgb16(b), 3, true) => {
                b.into_raw().iter().map(|&s| s as f64 / 65535.0).collect()
            }
            _ => {
                return Err(bundle_err(format!(
                    "{name}: pixel type does not match manifest format {}",
                    m.format.name()
                )))
            }
        };
        for y in 0..m.height {
            for x in 0..m.width {
                for ch in 0..m.channels {
                    let v = samples[(y * m.width + x) * m.channels + ch];
                    data[(ch * views + a) * plane + y * m.width + x] = E::from_f64(v);
                }
            }
        }
    }
    if let Some(a) = seen.iter().position(|s| !s) {
        return Err(bundle_err(format!(
            "view ({},{}) missing from manifest",
            a / m.v,
            a % m.v
        )));
    }
    let tensor = Tensor::from_vec(data, &[1, m.channels, views, m.height, m.width])?;
    LightField::new(tensor, m.u, m.v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scratch(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("gtf_bundle_tests").join(name);
        if dir.exists() {
            fs::remove_dir_all(&dir).unwrap();
        }
        dir
    }

    fn random_field(c: usize, seed: u64) -> LightField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::rand_uniform(&[1, c, 6, 7, 5], 0.0, 1.0, &mut rng);
        LightField::new(t, 2, 3).unwrap()
    }

    #[test]
    fn sixteen_bit_pgm_round_trips_to_quantization_error() {
        let dir = scratch("pgm16");
        let lf = random_field(1, 1);
        save_bundle(&dir, &lf, BundleFormat::Pgm16).unwrap();
        let back = load_bundle::<f64>(&dir).unwrap();
        assert_eq!(back.u(), 2);
        assert_eq!(back.v(), 3);
        let worst = lf
            .tensor()
            .data()
            .iter()
            .zip(back.tensor().data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.5 / 65535.0 + 1e-12, "worst {worst}");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rgb_png_round_trips_at_both_depths() {
        for (fmt, max) in [(BundleFormat::Png8, 255.0), (BundleFormat::Png16, 65535.0)] {
            let dir = scratch(fmt.name());
            let lf = random_field(3, 2);
            save_bundle(&dir, &lf, fmt).unwrap();
            let back = load_bundle::<f64>(&dir).unwrap();
            let worst = lf
                .tensor()
                .data()
                .iter()
                .zip(back.tensor().data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 0.5 / max + 1e-12, "{}: worst {worst}", fmt.name());
            fs::remove_dir_all(&dir).ok();
        }
    }

    #[test]
    fn fixed_content_saves_byte_identically() {
        let lf = random_field(1, 3);
        let dirs = [scratch("det_a"), scratch("det_b")];
        for d in &dirs {
            save_bundle(d, &lf, BundleFormat::Png16).unwrap();
        }
        for name in [MANIFEST_NAME, "view_u00_v00.png", "view_u01_v02.png"] {
            let a = fs::read(dirs[0].join(name)).unwrap();
            let b = fs::read(dirs[1].join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        for d in &dirs {
            fs::remove_dir_all(d).ok();
        }
    }

    #[test]
    fn rgb_cannot_be_saved_as_pgm() {
        let dir = scratch("rgb_pgm");
        let lf = random_field(3, 4);
        assert!(save_bundle(&dir, &lf, BundleFormat::Pgm8).is_err());
    }

    #[test]
    fn missing_and_duplicate_views_are_rejected() {
        let dir = scratch("manifest_rows");
        let lf = random_field(1, 5);
        save_bundle(&dir, &lf, BundleFormat::Pgm8).unwrap();
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).unwrap();

        let fail = |dir: &Path| match load_bundle::<f64>(dir) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected load failure"),
        };
        let mut lines: Vec<&str> = text.lines().collect();
        let dropped = lines.pop().unwrap();
        fs::write(&path, lines.join("\n")).unwrap();
        let err = fail(&dir);
        assert!(err.contains("missing"), "{err}");

        lines.push(dropped);
        lines.push(dropped);
        fs::write(&path, lines.join("\n")).unwrap();
        let err = fail(&dir);
        assert!(err.contains("twice"), "{err}");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn depth_mismatch_against_manifest_is_rejected() {
        let dir = scratch("depth_mismatch");
        let lf = random_field(1, 6);
        save_bundle(&dir, &lf, BundleFormat::Png8).unwrap();
        // Claim 16-bit in the manifest while the files are 8-bit.
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).unwrap().replace("png8", "png16");
        fs::write(&path, text).unwrap();
        assert!(load_bundle::<f64>(&dir).is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
