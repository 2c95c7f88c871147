//! Unrolled learned primal-dual reconstruction for list-mode data: a
//! per-event dual MLP and an image-domain CNN alternate for a fixed number
//! of phases, with hand-written reverse-mode gradients and Adam training.

pub mod checkpoint;
pub mod config;
pub mod error;
mod layers;
pub mod network;
pub mod params;
pub mod toy;
pub mod train;

pub use config::{Mode, NetworkConfig};
pub use error::{Error, Result};
pub use network::{
    dual_module_forward, lmpd_backward, lmpd_forward, mse_loss, primal_module_forward, Forward,
    NetOperator,
};
pub use params::{Block, BlockKind, Layout, NetworkParams};
pub use train::{train_toy, Sample, TrainConfig, TrainOutcome, TrainState, Trainer};
