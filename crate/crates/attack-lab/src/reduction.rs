//! Sample conversion from continuous LWE form into the shifted-modular form
//! the matrix-extraction problem takes: pick a random probe x_i per sample
//! and emit (x_i, q*b_i + q*x_i*A mod q). A CLWE-distributed input lands
//! exactly on b' = s'A + x(qA) + qe mod q with s' = gamma*s.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use plora_pll::centered_mod;

use crate::samplers::LweSampleSet;

#[derive(Clone, Debug)]
pub struct SolveMatrixSample {
    pub x: Array1<f64>,
    pub b_prime: Array1<f64>,
}

pub fn alg1_convert<R: Rng + ?Sized>(
    set: &LweSampleSet,
    q: f64,
    rng: &mut R,
) -> Vec<SolveMatrixSample> {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let m = set.params.secret_dim;
    (0..set.b.nrows())
        .map(|i| {
            let x = Array1::from_shape_fn(m, |_| std_normal.sample(rng));
            let probe = x.dot(&set.a); // x_i * A, one row
            let b_prime = Array1::from_shape_fn(set.params.out_dim, |j| {
                centered_mod(q * set.b[[i, j]] + q * probe[j], q)
            });
            SolveMatrixSample { x, b_prime }
        })
        .collect()
}
