//! Inference-time tooling: color conversion, image metrics, tiled and
//! test-time-augmented inference, and the synthetic scene generator that
//! provides ground truth with known epipolar geometry.

pub mod color;
pub mod metrics;
pub mod slope;
pub mod synth;
pub mod tile;
pub mod tta;

pub use metrics::{format_db, psnr_y, ssim_y, ViewScores};
pub use slope::{verify_epi_slope, SlopeReport};
pub use synth::{slope_probe, textured_scene, Layer, SyntheticScene};
pub use tile::{blend_weight_map, epsw_infer, BlendWindow, TileSpec};
pub use tta::tta_infer;
