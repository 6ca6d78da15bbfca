//! Disk formats: view-per-image bundles and metric report tables.

pub mod bundle;
pub mod report;

pub use bundle::{load_bundle, save_bundle, BundleFormat, MANIFEST_NAME};
pub use report::{write_metric_report, SceneScores};
