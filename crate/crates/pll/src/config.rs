//! Configuration for the private linear layer.

use crate::error::{PllError, Result};

/// Shape and randomness parameters of a private linear layer.
///
/// `q` is the working modulus of the randomized output; `gamma` fixes the
/// Euclidean norm of the hidden shift `s`. The hardness reduction wants
/// `gamma / q >= 2 sqrt(m)`; by default a violation is reported as a warning
/// (convergence under that regime is task-dependent), and `strict_gamma`
/// escalates it to an error.
#[derive(Clone, Debug, PartialEq)]
pub struct PllConfig {
    pub m: usize,
    pub n: usize,
    /// Rows of the noise dictionary E'.
    pub m_prime: usize,
    pub q: f64,
    pub gamma: f64,
    /// Bernoulli success probability for the per-round mask P.
    pub p_bern: f64,
    /// 0 means a dense m x n matrix; otherwise A = A1 * A2 with this rank.
    pub lora_rank: usize,
    /// Number of rows of s: `None` shares one vector across all input rows,
    /// `Some(d)` samples d separate vectors.
    pub s_rows: Option<usize>,
    pub strict_gamma: bool,
}

pub const DEFAULT_P_BERN: f64 = 0.9;
pub const DEFAULT_SIGMA_INIT: f64 = 0.02;

impl PllConfig {
    /// Config with the theorem-regime default `gamma = 2 sqrt(m) * q`.
    pub fn with_default_gamma(m: usize, n: usize, m_prime: usize, q: f64, lora_rank: usize) -> Self {
        Self {
            m,
            n,
            m_prime,
            q,
            gamma: 2.0 * (m as f64).sqrt() * q,
            p_bern: DEFAULT_P_BERN,
            lora_rank,
            s_rows: None,
            strict_gamma: false,
        }
    }

    /// Hard errors for malformed configs; returns soft warnings otherwise.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.m == 0 || self.n == 0 || self.m_prime == 0 {
            return Err(PllError::Config("m, n and m' must be positive".into()));
        }
        if !(self.q > 0.0) {
            return Err(PllError::Config(format!("q must be positive, got {}", self.q)));
        }
        if !(self.p_bern > 0.0 && self.p_bern <= 1.0) {
            return Err(PllError::Config(format!("p_bern must lie in (0, 1], got {}", self.p_bern)));
        }
        if self.gamma < 0.0 {
            return Err(PllError::Config("gamma must be nonnegative".into()));
        }
        if self.lora_rank > self.m.min(self.n) {
            return Err(PllError::Config(format!(
                "rank {} exceeds min(m, n) = {}",
                self.lora_rank,
                self.m.min(self.n)
            )));
        }
        if let Some(d) = self.s_rows {
            if d == 0 {
                return Err(PllError::Config("s_rows must be positive when set".into()));
            }
        }

        let mut warnings = Vec::new();
        let bound = 2.0 * (self.m as f64).sqrt();
        if self.gamma / self.q < bound {
            let msg = format!(
                "gamma/q = {:.3} below the reduction bound 2*sqrt(m) = {:.3}; \
                 extraction hardness is not backed by the reduction in this regime",
                self.gamma / self.q,
                bound
            );
            if self.strict_gamma {
                return Err(PllError::Config(msg));
            }
            warnings.push(msg);
        }
        Ok(warnings)
    }

    /// Nearest integer to q, ties to even; the bound for the k-randomness.
    pub fn k_bound(&self) -> i64 {
        self.q.round_ties_even() as i64
    }
}
