//! Private-layer weights: the trained matrix (dense or low-rank factors),
//! the noise dictionary E', and the fixed hidden shift s.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{PllConfig, DEFAULT_SIGMA_INIT};
use crate::error::{PllError, Result};

#[derive(Clone, Debug)]
pub enum PllMatrix {
    Dense(Array2<f64>),
    Factored { a1: Array2<f64>, a2: Array2<f64> },
}

impl PllMatrix {
    /// The effective m x n matrix.
    pub fn effective(&self) -> Array2<f64> {
        match self {
            PllMatrix::Dense(a) => a.clone(),
            PllMatrix::Factored { a1, a2 } => a1.dot(a2),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PllWeights {
    pub config: PllConfig,
    pub matrix: PllMatrix,
    /// m' x n noise dictionary, masked per round by P.
    pub e_prime: Array2<f64>,
    /// Hidden shift rows: one shared row, or d separate rows. Each row has
    /// Euclidean norm gamma. x' (the all-ones companion input) is implicit.
    pub s: Array2<f64>,
}

/// Uniform point on the radius-`gamma` sphere in R^m.
fn sample_sphere<R: Rng + ?Sized>(m: usize, gamma: f64, rng: &mut R) -> Array1<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Array1<f64> = Array1::from_iter((0..m).map(|_| normal.sample(rng)));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v * (gamma / norm);
        }
        if gamma == 0.0 {
            return Array1::zeros(m);
        }
    }
}

/// Initialize a private layer: s on the gamma-sphere, E' small Gaussian, and
/// A either dense standard-normal or LoRA-style factors (Gaussian A1, zero A2).
pub fn pll_init<R: Rng + ?Sized>(config: &PllConfig, rng: &mut R) -> Result<PllWeights> {
    config.validate()?;
    let (m, n, m_prime) = (config.m, config.n, config.m_prime);

    let s_count = config.s_rows.unwrap_or(1);
    let mut s = Array2::zeros((s_count, m));
    for mut row in s.rows_mut() {
        row.assign(&sample_sphere(m, config.gamma, rng));
    }

    let e_init = Normal::new(0.0, DEFAULT_SIGMA_INIT).unwrap();
    let e_prime = Array2::from_shape_fn((m_prime, n), |_| e_init.sample(rng));

    // Dense matrices start small: the fixed shift s has norm gamma = O(sqrt(m) q),
    // so a large initial A would put the pre-mod signal many periods past q at
    // step zero. Growing A from near zero keeps training inside the window
    // while E' learns to cancel the sA drift.
    let matrix = if config.lora_rank == 0 {
        let dense_init = Normal::new(0.0, DEFAULT_SIGMA_INIT).unwrap();
        PllMatrix::Dense(Array2::from_shape_fn((m, n), |_| dense_init.sample(rng)))
    } else {
        let r = config.lora_rank;
        let a1_init = Normal::new(0.0, 1.0 / (m as f64).sqrt()).unwrap();
        PllMatrix::Factored {
            a1: Array2::from_shape_fn((m, r), |_| a1_init.sample(rng)),
            a2: Array2::zeros((r, n)),
        }
    };

    Ok(PllWeights { config: config.clone(), matrix, e_prime, s })
}

impl PllWeights {
    /// The shift rows for a d-row input: shared s broadcasts, per-row s must
    /// match d exactly.
    pub fn shift_rows(&self, d: usize) -> Result<Array2<f64>> {
        if self.s.nrows() == 1 {
            let row = self.s.row(0);
            Ok(Array2::from_shape_fn((d, self.config.m), |(_, j)| row[j]))
        } else if self.s.nrows() == d {
            Ok(self.s.clone())
        } else {
            Err(PllError::Dims(format!(
                "per-row s has {} rows but input has {d}",
                self.s.nrows()
            )))
        }
    }

    pub fn effective_matrix(&self) -> Array2<f64> {
        self.matrix.effective()
    }

    /// s * A for a d-row input (the fixed additive part of Q_t).
    pub fn shift_term(&self, d: usize) -> Result<Array2<f64>> {
        Ok(self.shift_rows(d)?.dot(&self.effective_matrix()))
    }
}

// ── checkpoint format ────────────────────────────────────────────────────
// magic "PLLW" | config | matrix kind | row-major f64 arrays

pub const PLLW_MAGIC: &[u8; 4] = b"PLLW";

fn push_array(buf: &mut Vec<u8>, a: &Array2<f64>) {
    buf.extend_from_slice(&(a.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(a.ncols() as u32).to_le_bytes());
    for &v in a.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_array(data: &[u8], pos: &mut usize) -> Result<Array2<f64>> {
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        if *pos + len > data.len() {
            return Err(PllError::Checkpoint("truncated".into()));
        }
        let s = &data[*pos..*pos + len];
        *pos += len;
        Ok(s)
    };
    let rows = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
    if rows.saturating_mul(cols) > 1 << 26 {
        return Err(PllError::Checkpoint("array too large".into()));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        values.push(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| PllError::Checkpoint(e.to_string()))
}

pub fn weights_to_bytes(w: &PllWeights) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PLLW_MAGIC);
    let c = &w.config;
    buf.extend_from_slice(&(c.m as u32).to_le_bytes());
    buf.extend_from_slice(&(c.n as u32).to_le_bytes());
    buf.extend_from_slice(&(c.m_prime as u32).to_le_bytes());
    buf.extend_from_slice(&c.q.to_le_bytes());
    buf.extend_from_slice(&c.gamma.to_le_bytes());
    buf.extend_from_slice(&c.p_bern.to_le_bytes());
    buf.extend_from_slice(&(c.lora_rank as u32).to_le_bytes());
    buf.extend_from_slice(&(c.s_rows.unwrap_or(0) as u32).to_le_bytes());
    buf.push(c.strict_gamma as u8);
    match &w.matrix {
        PllMatrix::Dense(a) => {
            buf.push(0);
            push_array(&mut buf, a);
        }
        PllMatrix::Factored { a1, a2 } => {
            buf.push(1);
            push_array(&mut buf, a1);
            push_array(&mut buf, a2);
        }
    }
    push_array(&mut buf, &w.e_prime);
    push_array(&mut buf, &w.s);
    buf
}

pub fn weights_from_bytes(data: &[u8]) -> Result<PllWeights> {
    if data.len() < 4 || &data[..4] != PLLW_MAGIC {
        return Err(PllError::Checkpoint("bad magic".into()));
    }
    let mut pos = 4usize;
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        if *pos + len > data.len() {
            return Err(PllError::Checkpoint("truncated".into()));
        }
        let s = &data[*pos..*pos + len];
        *pos += len;
        Ok(s)
    };
    let m = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let m_prime = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let q = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let gamma = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let p_bern = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let lora_rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let s_rows_raw = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let strict_gamma = take(&mut pos, 1)?[0] != 0;
    let kind = take(&mut pos, 1)?[0];

    let matrix = match kind {
        0 => PllMatrix::Dense(read_array(data, &mut pos)?),
        1 => PllMatrix::Factored {
            a1: read_array(data, &mut pos)?,
            a2: read_array(data, &mut pos)?,
        },
        other => return Err(PllError::Checkpoint(format!("unknown matrix kind {other}"))),
    };
    let e_prime = read_array(data, &mut pos)?;
    let s = read_array(data, &mut pos)?;
    if pos != data.len() {
        return Err(PllError::Checkpoint("trailing bytes".into()));
    }

    let config = PllConfig {
        m,
        n,
        m_prime,
        q,
        gamma,
        p_bern,
        lora_rank,
        s_rows: if s_rows_raw == 0 { None } else { Some(s_rows_raw) },
        strict_gamma,
    };
    config.validate()?;
    Ok(PllWeights { config, matrix, e_prime, s })
}
