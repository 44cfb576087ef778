//! Low-rank bypass adapters, optionally wrapped in a private linear layer.
//!
//! A plain adapter contributes (alpha/r) * x A1 A2 on top of the frozen
//! projection. A wrapped adapter routes x through the private layer instead
//! and scales the demodulated output, so the server-side computation stays
//! exactly the he-linalg kernel shape (x A1 A2 + Q_t) and the alpha/r factor
//! is applied after demodulation on the client.

use ndarray::Array2;
use plora_pll::{demodulate, pll_forward_reference, train_forward, PllRound, PllWeights};

use crate::error::{ModelError, Result};

#[derive(Clone, Debug)]
pub enum AdapterKind {
    Plain { a1: Array2<f64>, a2: Array2<f64> },
    Pll(PllWeights),
}

#[derive(Clone, Debug)]
pub struct LoraAdapter {
    pub alpha: f64,
    pub rank: usize,
    pub kind: AdapterKind,
}

impl LoraAdapter {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn factors(&self) -> (&Array2<f64>, &Array2<f64>) {
        match &self.kind {
            AdapterKind::Plain { a1, a2 } => (a1, a2),
            AdapterKind::Pll(w) => match &w.matrix {
                plora_pll::PllMatrix::Factored { a1, a2 } => (a1, a2),
                plora_pll::PllMatrix::Dense(_) => {
                    unreachable!("wrapped adapters always carry factored matrices")
                }
            },
        }
    }

    /// Inference-path bypass. Wrapped adapters need the round randomness.
    pub fn bypass(&self, x: &Array2<f64>, round: Option<&PllRound>) -> Result<Array2<f64>> {
        match &self.kind {
            AdapterKind::Plain { a1, a2 } => Ok(x.dot(a1).dot(a2) * self.scaling()),
            AdapterKind::Pll(w) => {
                let round = round.ok_or_else(|| {
                    ModelError::Config("wrapped adapter called without round randomness".into())
                })?;
                let y = pll_forward_reference(x, w, round)?;
                Ok(demodulate(&y, w.config.q)? * self.scaling())
            }
        }
    }

    /// Training-path bypass: mod-q applied, no per-round randomness.
    pub fn bypass_train(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match &self.kind {
            AdapterKind::Plain { a1, a2 } => Ok(x.dot(a1).dot(a2) * self.scaling()),
            AdapterKind::Pll(w) => Ok(train_forward(w, x)? * self.scaling()),
        }
    }
}

/// The low-rank forward rule: h = x W + (alpha/r) x A1 A2, or its wrapped
/// variant with the bypass routed through the private layer.
pub fn lora_forward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    adapter: &LoraAdapter,
    round: Option<&PllRound>,
) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() {
        return Err(ModelError::Shape(format!(
            "input width {} does not match weight rows {}",
            x.ncols(),
            w.nrows()
        )));
    }
    Ok(x.dot(w) + &adapter.bypass(x, round)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn plain(a1: Array2<f64>, a2: Array2<f64>, alpha: f64, rank: usize) -> LoraAdapter {
        LoraAdapter { alpha, rank, kind: AdapterKind::Plain { a1, a2 } }
    }

    #[test]
    fn zero_a2_leaves_base_projection() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let w = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0f64));
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0f64));
        let adapter = plain(
            Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0f64)),
            Array2::zeros((2, 4)),
            16.0,
            2,
        );
        let h = lora_forward(&x, &w, &adapter, None).unwrap();
        assert_eq!(h, x.dot(&w));
    }

    #[test]
    fn alpha_equal_rank_cancels_scaling() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let w = Array2::zeros((2, 2));
        let a1 = array![[1.0], [2.0]];
        let a2 = array![[3.0, 4.0]];
        let adapter = plain(a1.clone(), a2.clone(), 1.0, 1);
        let h = lora_forward(&x, &w, &adapter, None).unwrap();
        assert_eq!(h, x.dot(&a1).dot(&a2));
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..5 {
            let (d, m, r, n) = (3usize, 24usize, 4usize, 24usize);
            let x = Array2::from_shape_fn((d, m), |_| rng.random_range(-1.0..1.0f64));
            let w = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0f64));
            let a1 = Array2::from_shape_fn((m, r), |_| rng.random_range(-1.0..1.0f64));
            let a2 = Array2::from_shape_fn((r, n), |_| rng.random_range(-1.0..1.0f64));
            let alpha = 8.0;
            let adapter = plain(a1.clone(), a2.clone(), alpha, r);

            // dense loop oracle
            let scale = alpha / r as f64;
            let mut expected = Array2::<f64>::zeros((d, n));
            for i in 0..d {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..m {
                        acc += x[[i, k]] * w[[k, j]];
                        for t in 0..r {
                            acc += scale * x[[i, k]] * a1[[k, t]] * a2[[t, j]];
                        }
                    }
                    expected[[i, j]] = acc;
                }
            }
            let h = lora_forward(&x, &w, &adapter, None).unwrap();
            let err = (&h - &expected).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            assert!(err <= 1e-12, "plaintext path error {err}");
        }
    }

    #[test]
    fn wrapped_adapter_requires_round() {
        let cfg = plora_pll::PllConfig::with_default_gamma(4, 4, 2, 1.0, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let w = plora_pll::pll_init(&cfg, &mut rng).unwrap();
        let adapter = LoraAdapter { alpha: 4.0, rank: 2, kind: AdapterKind::Pll(w) };
        let x = Array2::zeros((2, 4));
        assert!(adapter.bypass(&x, None).is_err());
    }
}
