//! Audio-only FCN, FiLM and MALiMo built on the `nn` kernel, with the
//! training loop, vocabulary, batching and saliency maps.

mod config;
mod data;
mod gradcheck;
mod net;
mod saliency;
mod train;
mod vocab;

pub use config::{ModelConfig, ModelKind, ModulationOrder};
pub use data::{Dataset, Example};
pub use gradcheck::{grad_check_model, MODEL_REL_FLOOR};
pub use net::{film_residual, min_frames, Batch, Forward, Model, Modulation, ResWeights};
pub use saliency::{bilinear, saliency, SaliencyMap};
pub use train::{accuracy, argmax, predict, train, EpochLog, TrainConfig, TrainReport};
pub use vocab::{Vocab, PAD, UNK};
