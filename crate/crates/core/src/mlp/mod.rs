//! The neural proxy: a four-layer softplus network trained with Adam.

mod adam;
mod checkpoint;
mod network;
mod proxy;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    sigmoid, softplus, ForwardCache, Gradients, Head, HeadGrad, HeadOutput, Layer, MlpModel, Normalizer,
    DEFAULT_HIDDEN, N_LAYERS,
};
pub use proxy::Proxy;
pub use train::{
    mu_schedule_step, train, train_into, EpochRecord, GapSummary, Method, TrainConfig, TrainSet,
    Validator,
};
