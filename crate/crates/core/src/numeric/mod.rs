//! Dense linear algebra, MLPs with backprop, fixed-weight convolution and Adam.
//!
//! Everything is `f64` so that finite-difference gradient checks are meaningful.

mod adam;
mod checkpoint;
mod conv;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, Entry, CHECKPOINT_VERSION};
pub use conv::{conv2d_forward, Conv2d, Grid3};
pub use matrix::Matrix;
pub use mlp::{dense_forward, mlp_backward, sigmoid, Activation, DenseLayer, Mlp, MlpCache, MlpGrads};

use sha2::{Digest, Sha256};

/// Derives an independent seed for `(stream, index)` from a master seed.
pub fn split_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
