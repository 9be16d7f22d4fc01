//! Curiosity-driven exploration rewarded by novel audio-visual associations.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: matrices, MLPs with backprop, fixed convolutions, Adam.
//! - [`envs`]: synthetic grid worlds that emit stacked frames and raw audio.
//! - [`features`]: random-CNN visual embeddings and FFT audio features.
//! - [`alignment`]: the audio-visual alignment discriminator and its training.
//! - [`rewards`]: intrinsic reward modules (alignment, future prediction,
//!   disagreement, RND, combined) and reward normalization.
//! - [`agent`]: categorical policy, GAE and PPO.
//! - [`harness`]: experiment configuration, training loop, metrics and plots.

pub mod agent;
pub mod alignment;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod numeric;
pub mod rewards;

pub use error::{Error, Result};
