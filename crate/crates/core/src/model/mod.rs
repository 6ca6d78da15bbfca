//! Model assembly: configuration presets, the end-to-end network, analytic
//! budget accounting, and checkpoint serialization.

pub mod budget;
pub mod checkpoint;
pub mod config;
pub mod gradsuite;
pub mod gtf;

pub use budget::{budget_table, count_flops, count_params, Budget};
pub use checkpoint::{Checkpoint, WeightSet};
pub use config::ModelConfig;
pub use gradsuite::{block_grad_suite, BlockGradReport};
pub use gtf::{pixel_shuffle, GtfModel};
