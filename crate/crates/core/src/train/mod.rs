//! Losses, optimizer, schedule, EMA, augmentation, and the training loop.

pub mod augment;
pub mod config;
pub mod driver;
pub mod loss;
pub mod optim;

pub use augment::{apply_to_pair, augment_lf};
pub use config::{LossKind, TrainConfig};
pub use driver::{train_loop, TrainData, TrainOutcome};
pub use loss::{charbonnier_ohem, l1_loss};
pub use optim::{steplr, Adam, Ema, ParamSet};
