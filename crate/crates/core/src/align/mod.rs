//! Patch/text alignment: a trainable linear projection scored by cosine
//! similarity, contrastive and MSE objectives with analytic gradients, AdamW,
//! and the two-stage training loop.

mod loss;
mod model;
mod optim;
mod train;

pub use loss::{
    contrastive_loss, density_mse_loss, mse_loss, patch_factor, split_patches, PatchSplit,
    DEFAULT_POSITIVE_THRESHOLD,
};
pub use model::{ProjectionModel, DEFAULT_TEMPERATURE};
pub use optim::{AdamW, AdamWConfig};
pub use train::{history_csv, train, EpochLoss, Stage, TrainConfig, TrainReport, TrainSample};
