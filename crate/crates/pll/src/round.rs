//! Per-round randomness and the reference forward/demodulation path.
//!
//! Each inference round draws a fresh Bernoulli mask P over E' and a fresh
//! integer matrix k, then serves y = xA + x'(E' .* P) + sA + kq. The client
//! strips the kq term with a centered mod-q reduction; what remains is the
//! trained function plus the bounded dropout-style noise from P.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::error::{PllError, Result};
use crate::weights::PllWeights;

#[derive(Clone, Debug)]
pub struct PllRound {
    /// m' x n matrix with {0,1} entries.
    pub p: Array2<f64>,
    /// d x n integer matrix (stored as f64), entries in [-round(q), round(q)].
    pub k: Array2<f64>,
    /// Q_t = x'(E' .* P) + sA + kq, shape d x n.
    pub qt: Array2<f64>,
}

/// Centered representative of v mod q, in [-q/2, q/2).
pub fn centered_mod(v: f64, q: f64) -> f64 {
    let r = v - (v / q).floor() * q;
    if r >= q / 2.0 {
        r - q
    } else {
        r
    }
}

/// Elementwise centered mod-q reduction; the client-side demodulation step.
pub fn demodulate(y: &Array2<f64>, q: f64) -> Result<Array2<f64>> {
    if !(q > 0.0) {
        return Err(PllError::Config(format!("modulus must be positive, got {q}")));
    }
    Ok(y.mapv(|v| centered_mod(v, q)))
}

/// The noise row sum x'(E' .* P): an all-ones x' collapses to column sums.
fn masked_noise_row(w: &PllWeights, p: &Array2<f64>) -> Array2<f64> {
    let masked = &w.e_prime * p;
    let cols = masked.ncols();
    let mut row = Array2::zeros((1, cols));
    for j in 0..cols {
        row[[0, j]] = masked.column(j).sum();
    }
    row
}

/// Q_t for given round randomness (the server-side plaintext offset).
pub fn build_qt(w: &PllWeights, d: usize, p: &Array2<f64>, k: &Array2<f64>) -> Result<Array2<f64>> {
    let (m_prime, n) = (w.config.m_prime, w.config.n);
    if p.dim() != (m_prime, n) {
        return Err(PllError::Dims(format!(
            "P has shape {:?}, expected ({m_prime}, {n})",
            p.dim()
        )));
    }
    if k.dim() != (d, n) {
        return Err(PllError::Dims(format!("k has shape {:?}, expected ({d}, {n})", k.dim())));
    }
    let noise = masked_noise_row(w, p); // 1 x n
    let shift = w.shift_term(d)?; // d x n
    Ok(&shift + &noise + &(k * w.config.q))
}

/// Draw fresh (P, k) and compute Q_t.
pub fn sample_round<R: Rng + ?Sized>(w: &PllWeights, d: usize, rng: &mut R) -> Result<PllRound> {
    let (m_prime, n) = (w.config.m_prime, w.config.n);
    let bern = Bernoulli::new(w.config.p_bern)
        .map_err(|e| PllError::Config(format!("bad p_bern: {e}")))?;
    let p = Array2::from_shape_fn((m_prime, n), |_| if bern.sample(rng) { 1.0 } else { 0.0 });
    let bound = w.config.k_bound();
    let k = Array2::from_shape_fn((d, n), |_| rng.random_range(-bound..=bound) as f64);
    let qt = build_qt(w, d, &p, &k)?;
    Ok(PllRound { p, k, qt })
}

impl PllRound {
    /// Assemble a round from explicit randomness (test hooks, recorded rounds).
    pub fn from_parts(w: &PllWeights, d: usize, p: Array2<f64>, k: Array2<f64>) -> Result<Self> {
        let qt = build_qt(w, d, &p, &k)?;
        Ok(Self { p, k, qt })
    }
}

/// Exact real-arithmetic reference: y = xA + x'(E' .* P) + sA + kq.
///
/// This is the plaintext oracle the encrypted path is checked against.
pub fn pll_forward_reference(x: &Array2<f64>, w: &PllWeights, round: &PllRound) -> Result<Array2<f64>> {
    let d = x.nrows();
    if x.ncols() != w.config.m {
        return Err(PllError::Dims(format!(
            "input has {} columns, layer expects {}",
            x.ncols(),
            w.config.m
        )));
    }
    if round.k.nrows() != d {
        return Err(PllError::Dims(format!(
            "round was sampled for d = {}, input has d = {d}",
            round.k.nrows()
        )));
    }
    let a = w.effective_matrix();
    Ok(x.dot(&a) + &round.qt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PllConfig;
    use crate::weights::{pll_init, PllMatrix, PllWeights};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// The worked single-output example: x=[1,2], A=[[1],[1]], s=[3,4],
    /// E'=[[0.25]], P=[1], q=4, k=[[2]] gives y = 3 + 0.25 + 7 + 8 = 18.25.
    fn worked_example() -> (PllWeights, PllRound, Array2<f64>) {
        let config = PllConfig {
            m: 2,
            n: 1,
            m_prime: 1,
            q: 4.0,
            gamma: 5.0, // |(3,4)| = 5
            p_bern: 1.0,
            lora_rank: 0,
            s_rows: None,
            strict_gamma: false,
        };
        let w = PllWeights {
            config,
            matrix: PllMatrix::Dense(array![[1.0], [1.0]]),
            e_prime: array![[0.25]],
            s: array![[3.0, 4.0]],
        };
        let round = PllRound::from_parts(&w, 1, array![[1.0]], array![[2.0]]).unwrap();
        let x = array![[1.0, 2.0]];
        (w, round, x)
    }

    #[test]
    fn forward_matches_hand_computation() {
        let (w, round, x) = worked_example();
        let y = pll_forward_reference(&x, &w, &round).unwrap();
        assert_eq!(y[[0, 0]], 18.25);
        // Q_t alone: 0.25 + 7 + 8 = 15.25
        assert_eq!(round.qt[[0, 0]], 15.25);
    }

    #[test]
    fn demodulate_centered_examples() {
        assert_eq!(centered_mod(7.0, 5.0), 2.0);
        assert_eq!(centered_mod(-3.0, 5.0), 2.0);
        assert_eq!(centered_mod(2.5, 5.0), -2.5);
        // identity inside the window
        assert_eq!(centered_mod(-2.5, 5.0), -2.5);
        assert_eq!(centered_mod(2.49, 5.0), 2.49);
        // the worked example demodulates to -1.75 (= 10.25 mod 4, centered)
        let (w, round, x) = worked_example();
        let y = pll_forward_reference(&x, &w, &round).unwrap();
        let z = demodulate(&y, w.config.q).unwrap();
        assert_eq!(z[[0, 0]], -1.75);
        assert!(demodulate(&y, 0.0).is_err());
    }

    #[test]
    fn degenerate_round_reduces_to_plain_linear() {
        // P = 0, k = 0, s = 0 leaves y = xA
        let config = PllConfig {
            m: 3,
            n: 2,
            m_prime: 2,
            q: 1.0,
            gamma: 0.0,
            p_bern: 0.5,
            lora_rank: 0,
            s_rows: None,
            strict_gamma: false,
        };
        let a = array![[1.0, -1.0], [2.0, 0.5], [0.0, 3.0]];
        let w = PllWeights {
            config,
            matrix: PllMatrix::Dense(a.clone()),
            e_prime: array![[0.5, 0.5], [0.25, -0.25]],
            s: array![[0.0, 0.0, 0.0]],
        };
        let x = array![[1.0, 2.0, -1.0], [0.5, 0.0, 1.0]];
        let round =
            PllRound::from_parts(&w, 2, Array2::zeros((2, 2)), Array2::zeros((2, 2))).unwrap();
        let y = pll_forward_reference(&x, &w, &round).unwrap();
        assert_eq!(y, x.dot(&a));
    }

    #[test]
    fn k_shift_moves_output_by_q() {
        let (w, round, x) = worked_example();
        let y = pll_forward_reference(&x, &w, &round).unwrap();
        let shifted = PllRound::from_parts(&w, 1, round.p.clone(), &round.k + 1.0).unwrap();
        let y2 = pll_forward_reference(&x, &w, &shifted).unwrap();
        assert_eq!(y2[[0, 0]] - y[[0, 0]], w.config.q);
    }

    #[test]
    fn degenerate_bernoulli_keeps_all_noise() {
        let mut cfg = PllConfig::with_default_gamma(4, 3, 5, 1.0, 0);
        cfg.p_bern = 1.0;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let w = pll_init(&cfg, &mut rng).unwrap();
        let round = sample_round(&w, 2, &mut rng).unwrap();
        assert!(round.p.iter().all(|&v| v == 1.0));
        // E collapses to plain column sums of E'
        let qt0 = build_qt(&w, 2, &round.p, &Array2::zeros((2, 3))).unwrap();
        let shift = w.shift_term(2).unwrap();
        for j in 0..3 {
            let col_sum: f64 = w.e_prime.column(j).sum();
            assert!((qt0[[0, j]] - shift[[0, j]] - col_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn bernoulli_mean_matches_rate() {
        let cfg = PllConfig::with_default_gamma(4, 10, 10, 1.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let w = pll_init(&cfg, &mut rng).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for _ in 0..100 {
            let round = sample_round(&w, 1, &mut rng).unwrap();
            total += round.p.sum();
            count += round.p.len();
        }
        let mean = total / count as f64;
        assert!((mean - cfg.p_bern).abs() <= 0.02, "empirical P mean {mean}");
    }

    #[test]
    fn k_histogram_uniform_chi_squared() {
        let cfg = PllConfig::with_default_gamma(4, 5, 4, 4.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let w = pll_init(&cfg, &mut rng).unwrap();
        let bound = cfg.k_bound();
        let bins = (2 * bound + 1) as usize;
        let mut hist = vec![0usize; bins];
        let mut total = 0usize;
        for _ in 0..500 {
            let round = sample_round(&w, 4, &mut rng).unwrap();
            for &v in round.k.iter() {
                hist[(v as i64 + bound) as usize] += 1;
                total += 1;
            }
        }
        assert!(total >= 10_000);
        let expected = total as f64 / bins as f64;
        let chi2: f64 = hist.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
        // chi-square 0.99 quantile via Wilson-Hilferty
        let df = (bins - 1) as f64;
        let z = 2.3263478740408408;
        let threshold = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 <= threshold, "chi2 {chi2} over threshold {threshold}");
    }

    #[test]
    fn qt_changes_only_with_randomness() {
        let cfg = PllConfig::with_default_gamma(4, 3, 4, 2.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let w = pll_init(&cfg, &mut rng).unwrap();
        let r1 = sample_round(&w, 2, &mut rng).unwrap();
        let rebuilt = build_qt(&w, 2, &r1.p, &r1.k).unwrap();
        assert_eq!(r1.qt, rebuilt);
        let r2 = sample_round(&w, 2, &mut rng).unwrap();
        assert_ne!(r1.qt, r2.qt);
    }

    #[test]
    fn sample_form_identity() {
        // y - kq = (x + s)A + E with E = x'(E' .* P)
        let cfg = PllConfig::with_default_gamma(6, 4, 3, 2.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let w = pll_init(&cfg, &mut rng).unwrap();
        for _ in 0..20 {
            let x = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0f64));
            let round = sample_round(&w, 3, &mut rng).unwrap();
            let y = pll_forward_reference(&x, &w, &round).unwrap();
            let a = w.effective_matrix();
            let shifted = (&x + &w.shift_rows(3).unwrap()).dot(&a);
            let noise = {
                let masked = &w.e_prime * &round.p;
                Array2::from_shape_fn((3, 4), |(_, j)| masked.column(j).sum())
            };
            let reference = &shifted + &noise + &(&round.k * w.config.q);
            let max_diff = (&y - &reference).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            assert!(max_diff <= 1e-9, "sample-form gap {max_diff}");
        }
    }

    #[test]
    fn demodulation_strips_k_term() {
        let cfg = PllConfig::with_default_gamma(6, 4, 3, 2.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let w = pll_init(&cfg, &mut rng).unwrap();
        let x = Array2::from_shape_fn((2, 6), |_| rng.random_range(-1.0..1.0f64));
        let round = sample_round(&w, 2, &mut rng).unwrap();
        let zero_k = PllRound::from_parts(&w, 2, round.p.clone(), Array2::zeros((2, 4))).unwrap();

        let with_k = demodulate(&pll_forward_reference(&x, &w, &round).unwrap(), w.config.q).unwrap();
        let without_k =
            demodulate(&pll_forward_reference(&x, &w, &zero_k).unwrap(), w.config.q).unwrap();
        // exact up to f64 roundoff from the kq addition
        let max_diff = (&with_k - &without_k).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-9, "k-term leaked through demodulation: {max_diff}");
    }

    #[test]
    fn noise_column_is_bounded_sum() {
        let cfg = PllConfig::with_default_gamma(4, 5, 6, 1.0, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let w = pll_init(&cfg, &mut rng).unwrap();
        for _ in 0..50 {
            let round = sample_round(&w, 1, &mut rng).unwrap();
            let masked = &w.e_prime * &round.p;
            for j in 0..5 {
                let e_j: f64 = masked.column(j).sum();
                let bound: f64 = w.e_prime.column(j).iter().map(|v| v.abs()).sum();
                assert!(e_j.abs() <= bound + 1e-12);
            }
        }
    }
}
