//! Private linear layer: a trained modular layer y = xA + x'(E' .* P) + sA + kq
//! whose per-round randomness frustrates unit-vector extraction while a
//! centered mod-q reduction on the client recovers the useful signal.
//!
//! Weights are immutable during inference; `sample_round` is the only
//! per-request randomness and takes an explicit RNG handle.

mod config;
mod error;
mod round;
mod train;
mod weights;

pub use config::{PllConfig, DEFAULT_P_BERN, DEFAULT_SIGMA_INIT};
pub use error::{PllError, Result};
pub use round::{build_qt, centered_mod, demodulate, pll_forward_reference, sample_round, PllRound};
pub use train::{
    calibrate_q, loss_and_gradients, pll_train_step, premod_signal_std, train_forward, Gradients,
    Loss, MatrixGrad,
};
pub use weights::{pll_init, weights_from_bytes, weights_to_bytes, PllMatrix, PllWeights, PLLW_MAGIC};
