//! Measures the dominant EPI line slope in all four view directions.
//!
//! For a scene of disparity d, stepping one view along an angular axis
//! shifts content d pixels along the matched spatial axis. The measurement
//! correlates consecutive rows of each EPI plane over integer shifts and
//! takes the argmax; rows are mean-subtracted first so additive per-row
//! offsets (as the diagonal planes of separable textures produce) cannot
//! bias the peak.

use crate::error::{Error, Result};
use crate::geometry::{diag135_indices, diag45_indices, LightField};
use crate::tensor::Elem;

/// Measured per-axis shift (pixels per view step) per direction. Diagonal
/// planes exist only on square view grids.
#[derive(Clone, Copy, Debug)]
pub struct SlopeReport {
    pub horizontal: f64,
    pub vertical: f64,
    pub diag45: Option<f64>,
    pub diag135: Option<f64>,
}

/// One EPI plane: rows[i] is the spatial line seen from the i-th view along
/// the direction's angular axis.
struct Plane<'a> {
    rows: Vec<&'a [f64]>,
}

fn correlate(planes: &[Plane], max_shift: usize, dir: &'static str) -> Result<f64> {
    let mut signal = 0.0;
    let shifts = 2 * max_shift + 1;
    let mut score = vec![0.0; shifts];
    for plane in planes {
        let n = plane.rows[0].len();
        let centered: Vec<Vec<f64>> = plane
            .rows
            .iter()
            .map(|r| {
                let m = r.iter().sum::<f64>() / n as f64;
                r.iter().map(|x| x - m).collect()
            })
            .collect();
        for pair in centered.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            signal += prev.iter().map(|x| x * x).sum::<f64>();
            for (si, sc) in score.iter_mut().enumerate() {
                let s = si as i64 - max_shift as i64;
                // next(x) against prev(x - s) over the valid overlap.
                let lo = s.max(0) as usize;
                let hi = (n as i64 + s.min(0)) as usize;
                if lo >= hi {
                    continue;
                }
                let dot: f64 = (lo..hi)
                    .map(|x| next[x] * prev[(x as i64 - s) as usize])
                    .sum();
                *sc += dot / (hi - lo) as f64;
            }
        }
    }
    if signal < 1e-12 {
        return Err(Error::numeric(
            "verify_epi_slope",
            format!("textureless input along the {dir} direction"),
        ));
    }
    let best = score
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i as i64 - max_shift as i64)
        .unwrap_or(0);
    Ok(best as f64)
}

/// Estimates the per-axis shift between consecutive views in the
/// horizontal, vertical, and (on square grids) both diagonal directions,
/// searching integer shifts up to `max_shift`.
pub fn verify_epi_slope<E: Elem>(lf: &LightField<E>, max_shift: usize) -> Result<SlopeReport> {
    if lf.batch() != 1 || lf.channels() != 1 {
        return Err(Error::contract(
            "verify_epi_slope",
            "expected a single-scene, single-channel field",
        ));
    }
    let (u, v, h, w) = (lf.u(), lf.v(), lf.height(), lf.width());
    let data: Vec<f64> = lf.tensor().data().iter().map(|x| x.as_f64()).collect();
    let px = h * w;
    let row = |a: usize, y: usize| &data[a * px + y * w..a * px + (y + 1) * w];
    // Spatial h-lines need a stride-w gather; materialize them per view.
    let cols: Vec<Vec<f64>> = (0..u * v * w)
        .map(|i| {
            let (a, x) = (i / w, i % w);
            (0..h).map(|y| data[a * px + y * w + x]).collect()
        })
        .collect();
    let col = |a: usize, x: usize| cols[a * w + x].as_slice();

    // Horizontal: plane per (v, w), rows indexed by u, samples along h.
    let mut planes = Vec::with_capacity(v * w);
    for iv in 0..v {
        for x in 0..w {
            planes.push(Plane {
                rows: (0..u).map(|iu| col(iu * v + iv, x)).collect(),
            });
        }
    }
    let horizontal = correlate(&planes, max_shift, "horizontal")?;

    // Vertical: plane per (u, h), rows indexed by v, samples along w.
    let mut planes = Vec::with_capacity(u * h);
    for iu in 0..u {
        for y in 0..h {
            planes.push(Plane {
                rows: (0..v).map(|iv| row(iu * v + iv, y)).collect(),
            });
        }
    }
    let vertical = correlate(&planes, max_shift, "vertical")?;

    let (diag45, diag135) = if u == v && u >= 2 {
        let measure = |idx: Vec<usize>, dir: &'static str| -> Result<f64> {
            let mut planes = Vec::with_capacity(w);
            for x in 0..w {
                planes.push(Plane { rows: idx.iter().map(|&a| col(a, x)).collect() });
            }
            correlate(&planes, max_shift, dir)
        };
        (
            Some(measure(diag45_indices(u, v), "diag45")?),
            Some(measure(diag135_indices(u, v), "diag135")?),
        )
    } else {
        (None, None)
    };

    Ok(SlopeReport { horizontal, vertical, diag45, diag135 })
}
