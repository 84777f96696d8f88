//! Adam, the data pipeline, pixel pretraining and the adversarial loop.

mod adam;
mod config;
mod data;
mod train;

pub use adam::{adam_step, learning_rate, AdamConfig, AdamState};
pub use config::{DiscriminatorSize, Domain, PerceptualKind, TrainConfig};
pub use data::{crop_at, crop_pair, Batch, BatchSampler, BatchStream, CropPair, Dataset, TrainingPair};
pub use train::{
    discriminator_inputs, discriminator_seed, discriminator_step, log_columns, moving_average, pretrain_pixel,
    train_gan, DiscriminatorInputs, GanReport, PretrainReport, TrainLog,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::{AutodiffError, Checkpoint};
use crate::imaging::ImagingError;
use crate::losses::LossError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("undersized input: {0}")]
    Undersized(String),
    #[error("no gradient for parameter {0}")]
    MissingGradient(String),
    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged {
        iteration: usize,
        message: String,
        /// Parameters as they were before the failing iteration.
        last_good: Box<Checkpoint>,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
