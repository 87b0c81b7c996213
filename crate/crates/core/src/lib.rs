//! Audio-visual attention networks for mental-disorder screening.
//!
//! The crate covers the whole pipeline: denoised log-mel audio features and
//! aligned face clips, an attention CNN for audio and a 3-D residual network
//! with channel attention for video, loss-fusion fine-tuning against a frozen
//! audio model, and the evaluation harness.

pub mod audio;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod video;

pub use error::{Error, Result};
pub use tensor::{Adam, Gradients, ModelParams, Tape, Tensor, Var};
