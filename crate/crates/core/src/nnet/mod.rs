//! Convolutional-recurrent network with hand-written reverse-mode gradients.
//!
//! Conv blocks (circular angle padding, rectifier, max-pool) turn the map
//! into a sequence along the time axis, stacked bidirectional GRUs summarize
//! it, and two dense heads emit four detection scores and four wall normals.

pub mod adamw;
pub mod config;
pub mod layers;
pub mod model;
pub mod params;
pub mod train;

pub use adamw::{AdamW, AdamWConfig};
pub use config::{BlockShape, ModelConfig};
pub use layers::{circular_pad, Tensor3};
pub use model::{ForwardCache, ModelOutput, Network};
pub use params::{read_checkpoint_header, read_checkpoint_values, write_checkpoint, ParamLayout, TensorSpec};
pub use train::{batch_gradient, evaluate_loss, history_csv, predict, train, EpochRecord, Example, TrainConfig, TrainResult};
