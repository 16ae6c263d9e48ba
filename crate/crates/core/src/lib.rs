//! Recovery of augmented soft labels (label smoothing, mixup) and last-layer
//! features from the gradients of a classifier's final fully-connected
//! layer, plus analytical input reconstruction through unbiased
//! fully-connected networks.
//!
//! The attack rests on one identity: the weight gradient of the classifier
//! layer is row-wise `(p_i - y_i)·xᵀ`, so every row is a scaled copy of the
//! layer input. Picking one row `g_r` and a scalar `λ`, the candidate feature
//! `λ·g_r` determines a pseudo label whose entries always sum to one; a loss
//! on the shape of that label pins down `λ`, and with it both the label and
//! the feature.

pub mod error;
pub mod experiment;
pub mod metrics;
pub mod reconstruct;
pub mod recovery;
pub mod rng;
pub mod robustness;
pub mod tensor;
pub mod victim;

pub use error::{Error, Result};
pub use rng::RngHandle;
pub use tensor::Tensor;
