//! Gradient training of the private layer.
//!
//! Training forward: y = xA + x'E' + sA mod q (no per-round P or k; those are
//! inference randomness). A (or its factors) and E' receive gradients; s, x'
//! and q stay frozen. The centered mod is treated as identity in the backward
//! pass (straight-through), which is exact everywhere except at wrap
//! boundaries.

use ndarray::Array2;

use crate::error::{PllError, Result};
use crate::round::centered_mod;
use crate::weights::{PllMatrix, PllWeights};

#[derive(Clone, Copy, Debug)]
pub enum Loss {
    Mse,
}

/// Training-path forward: mod-q applied, no round randomness.
pub fn train_forward(w: &PllWeights, x: &Array2<f64>) -> Result<Array2<f64>> {
    let d = x.nrows();
    if x.ncols() != w.config.m {
        return Err(PllError::Dims(format!(
            "input has {} columns, layer expects {}",
            x.ncols(),
            w.config.m
        )));
    }
    let a = w.effective_matrix();
    let shifted = (x + &w.shift_rows(d)?).dot(&a);
    let noise = Array2::from_shape_fn((1, w.config.n), |(_, j)| w.e_prime.column(j).sum());
    let z = &shifted + &noise;
    Ok(z.mapv(|v| centered_mod(v, w.config.q)))
}

/// Analytic gradients of the MSE loss w.r.t. the trainable parameters
/// (straight-through across the mod). Returns (loss, dA-or-factors, dE').
pub struct Gradients {
    pub matrix: MatrixGrad,
    pub e_prime: Array2<f64>,
}

pub enum MatrixGrad {
    Dense(Array2<f64>),
    Factored { a1: Array2<f64>, a2: Array2<f64> },
}

pub fn loss_and_gradients(
    w: &PllWeights,
    x: &Array2<f64>,
    target: &Array2<f64>,
    loss: Loss,
) -> Result<(f64, Gradients)> {
    let d = x.nrows();
    if target.dim() != (d, w.config.n) {
        return Err(PllError::Dims(format!(
            "target has shape {:?}, expected ({d}, {})",
            target.dim(),
            w.config.n
        )));
    }
    let y = train_forward(w, x)?;
    let diff = &y - target;
    let count = (d * w.config.n) as f64;
    let loss_value = match loss {
        Loss::Mse => diff.iter().map(|v| v * v).sum::<f64>() / count,
    };
    if !loss_value.is_finite() {
        return Err(PllError::Diverged);
    }

    // dL/dz with the mod treated as identity
    let dz = diff.mapv(|v| 2.0 * v / count);
    let xs = x + &w.shift_rows(d)?;

    let matrix = match &w.matrix {
        PllMatrix::Dense(_) => MatrixGrad::Dense(xs.t().dot(&dz)),
        PllMatrix::Factored { a1, a2 } => {
            let xst_dz = xs.t().dot(&dz); // m x n
            MatrixGrad::Factored { a1: xst_dz.dot(&a2.t()), a2: a1.t().dot(&xst_dz) }
        }
    };
    // x' is all ones: every row of dE' is the column sum of dz
    let col_sums = Array2::from_shape_fn((1, w.config.n), |(_, j)| dz.column(j).sum());
    let e_prime = Array2::from_shape_fn((w.config.m_prime, w.config.n), |(_, j)| col_sums[[0, j]]);

    Ok((loss_value, Gradients { matrix, e_prime }))
}

/// One SGD step on the trainable parameters. Returns the pre-update loss.
pub fn pll_train_step(
    w: &mut PllWeights,
    x: &Array2<f64>,
    target: &Array2<f64>,
    loss: Loss,
    lr: f64,
) -> Result<f64> {
    let (loss_value, grads) = loss_and_gradients(w, x, target, loss)?;
    match (&mut w.matrix, grads.matrix) {
        (PllMatrix::Dense(a), MatrixGrad::Dense(g)) => *a -= &(g * lr),
        (PllMatrix::Factored { a1, a2 }, MatrixGrad::Factored { a1: g1, a2: g2 }) => {
            *a1 -= &(g1 * lr);
            *a2 -= &(g2 * lr);
        }
        _ => unreachable!("gradient kind always matches matrix kind"),
    }
    w.e_prime -= &(grads.e_prime * lr);
    Ok(loss_value)
}

/// Standard deviation of the pre-mod training signal on a batch; the q
/// calibration rule sets q to four times this.
pub fn premod_signal_std(w: &PllWeights, x: &Array2<f64>) -> Result<f64> {
    let d = x.nrows();
    let a = w.effective_matrix();
    let shifted = (x + &w.shift_rows(d)?).dot(&a);
    let noise = Array2::from_shape_fn((1, w.config.n), |(_, j)| w.e_prime.column(j).sum());
    let z = &shifted + &noise;
    let mean = z.sum() / z.len() as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
    Ok(var.sqrt())
}

/// q such that the pre-mod signal std is about q/4 on the given batch.
pub fn calibrate_q(w: &PllWeights, x: &Array2<f64>) -> Result<f64> {
    Ok(4.0 * premod_signal_std(w, x)?)
}
