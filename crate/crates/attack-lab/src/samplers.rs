//! Sample-set generation for the hardness experiments.
//!
//! A sample set carries t responses against one shared matrix A, in the
//! orientation the reduction consumes: the secret multiplies A from the left
//! and every response is a row vector. Ground truth (secret and errors) is
//! retained for test assertions; nothing here is an attack input sanitizer.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use plora_pll::centered_mod;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler parameters: {0}")]
    Params(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleTag {
    /// Integer LWE over Z_q.
    Lwe,
    /// Continuous LWE: b = gamma * s A + e mod 1, unit secret.
    Clwe,
    /// Uniform responses (the null distribution).
    Uniform,
}

#[derive(Clone, Debug)]
pub struct LweParams {
    /// Number of samples t.
    pub samples: usize,
    /// Secret dimension (the m of the shifted-matrix problem).
    pub secret_dim: usize,
    /// Response width n.
    pub out_dim: usize,
    pub gamma: f64,
    pub beta: f64,
    pub q: f64,
}

#[derive(Clone, Debug)]
pub struct LweSampleSet {
    pub params: LweParams,
    pub tag: SampleTag,
    /// secret_dim x out_dim, entries N(0,1) for the continuous tags.
    pub a: Array2<f64>,
    /// samples x out_dim responses.
    pub b: Array2<f64>,
    /// Retained ground truth.
    pub secret: Array1<f64>,
    pub errors: Array2<f64>,
}

pub fn clwe_sample<R: Rng + ?Sized>(
    params: &LweParams,
    tag: SampleTag,
    rng: &mut R,
) -> Result<LweSampleSet, SamplerError> {
    if params.samples == 0 || params.secret_dim == 0 || params.out_dim == 0 {
        return Err(SamplerError::Params("all dimensions must be positive".into()));
    }
    if params.beta < 0.0 {
        return Err(SamplerError::Params("beta must be nonnegative".into()));
    }
    let bound = 2.0 * (params.secret_dim as f64).sqrt();
    if tag == SampleTag::Clwe && params.gamma < bound {
        return Err(SamplerError::Params(format!(
            "gamma {} below 2*sqrt(secret_dim) = {bound}",
            params.gamma
        )));
    }

    let (t, m, n) = (params.samples, params.secret_dim, params.out_dim);
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    match tag {
        SampleTag::Clwe => {
            let a = Array2::from_shape_fn((m, n), |_| std_normal.sample(rng));
            let mut secret: Array1<f64> = Array1::from_shape_fn(m, |_| std_normal.sample(rng));
            let norm = secret.dot(&secret).sqrt();
            secret.mapv_inplace(|v| v / norm);
            let errors = if params.beta == 0.0 {
                Array2::zeros((t, n))
            } else {
                let noise = Normal::new(0.0, params.beta).unwrap();
                Array2::from_shape_fn((t, n), |_| noise.sample(rng))
            };
            let signal = secret.dot(&a) * params.gamma; // 1 x n, shared by all samples
            let b = Array2::from_shape_fn((t, n), |(i, j)| {
                centered_mod(signal[j] + errors[[i, j]], 1.0)
            });
            Ok(LweSampleSet { params: params.clone(), tag, a, b, secret, errors })
        }
        SampleTag::Uniform => {
            let a = Array2::from_shape_fn((m, n), |_| std_normal.sample(rng));
            let mut secret: Array1<f64> = Array1::from_shape_fn(m, |_| std_normal.sample(rng));
            let norm = secret.dot(&secret).sqrt();
            secret.mapv_inplace(|v| v / norm);
            let b = Array2::from_shape_fn((t, n), |_| rng.random_range(-0.5..0.5));
            Ok(LweSampleSet {
                params: params.clone(),
                tag,
                a,
                b,
                secret,
                errors: Array2::zeros((t, n)),
            })
        }
        SampleTag::Lwe => {
            let q = params.q;
            if q < 2.0 || q.fract() != 0.0 {
                return Err(SamplerError::Params(format!(
                    "integer LWE needs an integer modulus >= 2, got {q}"
                )));
            }
            let a = Array2::from_shape_fn((m, n), |_| rng.random_range(0..q as i64) as f64);
            let small = Normal::new(0.0, params.beta.max(1.0)).unwrap();
            let secret = Array1::from_shape_fn(m, |_| small.sample(rng).round());
            let errors = Array2::from_shape_fn((t, n), |_| small.sample(rng).round());
            let signal = secret.dot(&a);
            let b = Array2::from_shape_fn((t, n), |(i, j)| {
                centered_mod(signal[j] + errors[[i, j]], q)
            });
            Ok(LweSampleSet { params: params.clone(), tag, a, b, secret, errors })
        }
    }
}
