//! The unit-vector extraction attack and its residual statistics against a
//! randomized oracle.
//!
//! Against a deterministic linear layer the attack recovers the full weight
//! matrix in exactly n queries. Against the private layer the same queries
//! see fresh per-round randomness; `extraction_residuals` quantifies what the
//! attacker is left with: a least-squares estimate with positive residual
//! variance and a repeat-query disagreement rate near one.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use plora_pll::{demodulate, pll_forward_reference, sample_round, PllWeights};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("oracle is not deterministic: repeated query disagreed")]
    NonDeterministic,

    #[error("oracle returned {got} entries, expected {want}")]
    Width { got: usize, want: usize },
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub matrix: Array2<f64>,
    pub queries: usize,
}

/// Recover a deterministic linear layer x -> xA by querying the n unit
/// vectors; row i of the result is the response to e_i. Exactly `dim`
/// queries are issued.
pub fn extract_plain_linear<F>(oracle: &mut F, dim: usize) -> Result<Extraction, ExtractError>
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(dim);
    let mut width = None;
    for i in 0..dim {
        let mut e = Array1::zeros(dim);
        e[i] = 1.0;
        let response = oracle(&e);
        match width {
            None => width = Some(response.len()),
            Some(w) if w != response.len() => {
                return Err(ExtractError::Width { got: response.len(), want: w })
            }
            _ => {}
        }
        rows.push(response);
    }
    let n = width.unwrap_or(0);
    let mut matrix = Array2::zeros((dim, n));
    for (i, row) in rows.iter().enumerate() {
        matrix.row_mut(i).assign(row);
    }
    Ok(Extraction { matrix, queries: dim })
}

#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub trials: usize,
    /// Fraction of repeated query pairs whose responses differ anywhere.
    pub disagreement_rate: f64,
    /// Per-entry variance of responses around the least-squares (mean) fit.
    pub residual_variance: f64,
    /// The attacker's best estimate of the layer.
    pub estimate: Array2<f64>,
}

/// Run the unit-vector attack against a (possibly randomized) oracle,
/// repeating each query `trials` times.
pub fn extraction_residuals<F>(
    oracle: &mut F,
    dim: usize,
    trials: usize,
) -> Result<ResidualReport, ExtractError>
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    assert!(trials >= 2, "need at least two trials per query to measure residuals");
    let mut estimate: Option<Array2<f64>> = None;
    let mut residual_sq = 0.0f64;
    let mut residual_count = 0usize;
    let mut disagreements = 0usize;
    let mut pairs = 0usize;

    for i in 0..dim {
        let mut e = Array1::zeros(dim);
        e[i] = 1.0;
        let responses: Vec<Array1<f64>> = (0..trials).map(|_| oracle(&e)).collect();
        let width = responses[0].len();
        if let Some(est) = &estimate {
            if est.ncols() != width {
                return Err(ExtractError::Width { got: width, want: est.ncols() });
            }
        } else {
            estimate = Some(Array2::zeros((dim, width)));
        }

        let mut mean = Array1::<f64>::zeros(width);
        for r in &responses {
            mean = mean + r;
        }
        mean.mapv_inplace(|v| v / trials as f64);

        for r in &responses {
            for j in 0..width {
                residual_sq += (r[j] - mean[j]).powi(2);
            }
            residual_count += width;
        }
        for pair in responses.windows(2) {
            pairs += 1;
            let differs = pair[0]
                .iter()
                .zip(pair[1].iter())
                .any(|(a, b)| (a - b).abs() > 1e-12);
            if differs {
                disagreements += 1;
            }
        }
        estimate.as_mut().unwrap().row_mut(i).assign(&mean);
    }

    Ok(ResidualReport {
        trials,
        disagreement_rate: disagreements as f64 / pairs.max(1) as f64,
        residual_variance: residual_sq / residual_count.max(1) as f64,
        estimate: estimate.unwrap_or_else(|| Array2::zeros((dim, 0))),
    })
}

/// The attacker-visible private-layer endpoint: full forward with fresh round
/// randomness, demodulated client-side.
pub fn pll_demod_oracle<'a, R: Rng>(
    weights: &'a PllWeights,
    rng: &'a mut R,
) -> impl FnMut(&Array1<f64>) -> Array1<f64> + 'a {
    move |x: &Array1<f64>| {
        let row = Array2::from_shape_fn((1, x.len()), |(_, j)| x[j]);
        let round = sample_round(weights, 1, rng).expect("round sampling");
        let y = pll_forward_reference(&row, weights, &round).expect("forward");
        let z = demodulate(&y, weights.config.q).expect("demodulate");
        Array1::from_iter(z.row(0).iter().cloned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use plora_pll::{PllConfig, PllMatrix, PllRound};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn recovers_known_matrix_exactly() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let mut calls = 0usize;
        let mut oracle = |x: &Array1<f64>| {
            calls += 1;
            x.dot(&a)
        };
        let out = extract_plain_linear(&mut oracle, 2).unwrap();
        assert_eq!(out.matrix, a);
        assert_eq!(out.queries, 2);
        assert_eq!(calls, 2);
    }

    #[test]
    fn zero_matrix_recovered() {
        let mut oracle = |x: &Array1<f64>| Array1::zeros(x.len());
        let out = extract_plain_linear(&mut oracle, 5).unwrap();
        assert!(out.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_16x16_exact_with_query_counter() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let truth = Array2::from_shape_fn((16, 16), |_| rng.random_range(-2.0..2.0f64));
        let mut calls = 0usize;
        let mut oracle = |x: &Array1<f64>| {
            calls += 1;
            x.dot(&truth)
        };
        let out = extract_plain_linear(&mut oracle, 16).unwrap();
        assert_eq!(calls, 16);
        let max = (&out.matrix - &truth).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert_eq!(max, 0.0, "unit-vector extraction must be exact");
    }

    /// Degenerate private layer (fixed round, no wraps) behaves like a plain
    /// layer plus constant offset: residual variance collapses to zero.
    #[test]
    fn degenerate_pll_has_no_residuals() {
        let m = 6;
        let cfg = PllConfig {
            m,
            n: 4,
            m_prime: 3,
            q: 1e6,
            gamma: 2.0 * (m as f64).sqrt() * 1e6,
            p_bern: 1.0,
            lora_rank: 0,
            s_rows: None,
            strict_gamma: false,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let w = plora_pll::pll_init(&cfg, &mut rng).unwrap();
        let round = PllRound::from_parts(
            &w,
            1,
            Array2::ones((3, 4)),
            Array2::zeros((1, 4)),
        )
        .unwrap();

        let mut oracle = |x: &Array1<f64>| {
            let row = Array2::from_shape_fn((1, m), |(_, j)| x[j]);
            let y = pll_forward_reference(&row, &w, &round).unwrap();
            let z = demodulate(&y, w.config.q).unwrap();
            Array1::from_iter(z.row(0).iter().cloned())
        };
        let report = extraction_residuals(&mut oracle, m, 8).unwrap();
        assert!(report.residual_variance <= 1e-12, "variance {}", report.residual_variance);
        assert_eq!(report.disagreement_rate, 0.0);
    }

    #[test]
    fn default_pll_defeats_repeat_queries() {
        let cfg = PllConfig::with_default_gamma(16, 16, 16, 2.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let w = plora_pll::pll_init(&cfg, &mut rng).unwrap();
        let mut oracle_rng = ChaCha12Rng::seed_from_u64(4);
        let mut oracle = pll_demod_oracle(&w, &mut oracle_rng);
        let report = extraction_residuals(&mut oracle, 16, 16).unwrap();
        assert!(
            report.disagreement_rate > 0.99,
            "disagreement {}",
            report.disagreement_rate
        );
        assert!(report.residual_variance > 0.0);
    }

    /// Residual variance grows with the modulus: larger q means larger jumps
    /// whenever the round noise pushes the signal across a wrap boundary.
    #[test]
    fn residual_variance_monotone_in_q() {
        let mut variances = Vec::new();
        for (idx, q) in [1.0f64, 2.0, 4.0].into_iter().enumerate() {
            let m = 8;
            let cfg = PllConfig {
                m,
                n: 8,
                m_prime: 16,
                q,
                gamma: 2.0 * (m as f64).sqrt() * q,
                p_bern: 0.9,
                lora_rank: 0,
                s_rows: None,
                strict_gamma: false,
            };
            let mut rng = ChaCha12Rng::seed_from_u64(40 + idx as u64);
            let mut w = plora_pll::pll_init(&cfg, &mut rng).unwrap();
            // Definition-4 regime: standard-normal dense matrix, and a noise
            // dictionary large enough that wrap crossings are common
            let std_normal = Normal::new(0.0, 1.0).unwrap();
            w.matrix = PllMatrix::Dense(Array2::from_shape_fn((m, 8), |_| {
                std_normal.sample(&mut rng)
            }));
            let e_init = Normal::new(0.0, 0.3).unwrap();
            w.e_prime = Array2::from_shape_fn((16, 8), |_| e_init.sample(&mut rng));

            let mut oracle_rng = ChaCha12Rng::seed_from_u64(50);
            let mut oracle = pll_demod_oracle(&w, &mut oracle_rng);
            let report = extraction_residuals(&mut oracle, m, 64).unwrap();
            variances.push(report.residual_variance);
        }
        assert!(
            variances[0] < variances[1] && variances[1] < variances[2],
            "variance not monotone in q: {variances:?}"
        );
    }
}
