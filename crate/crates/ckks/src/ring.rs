//! RNS ring elements of Z[X]/(X^n + 1) and the polynomial ops the scheme needs.
//!
//! A `RingElement` is a list of residue limbs plus a domain flag. The element
//! itself does not know which chain primes its limbs belong to; every
//! operation takes the owning `CkksParams` and an explicit basis (a slice of
//! chain indices), which keeps the data/key-switch basis split visible at
//! call sites.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::arith::{add_mod, mul_mod, sub_mod};
use crate::params::CkksParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Coeff,
    Eval,
}

#[derive(Clone, Debug)]
pub struct RingElement {
    pub limbs: Vec<Vec<u64>>,
    pub domain: Domain,
}

impl RingElement {
    pub fn zero(n: usize, limb_count: usize, domain: Domain) -> Self {
        Self { limbs: vec![vec![0u64; n]; limb_count], domain }
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    /// Drop limbs beyond `count` (used when an element moves to a lower level).
    pub fn truncated(&self, count: usize) -> Self {
        Self { limbs: self.limbs[..count].to_vec(), domain: self.domain }
    }
}

/// Map a signed integer vector into RNS residue limbs over `basis` (coeff domain).
pub fn signed_to_limbs(params: &CkksParams, basis: &[usize], signed: &[i64]) -> RingElement {
    let limbs = basis
        .iter()
        .map(|&idx| {
            let q = params.prime(idx);
            signed.iter().map(|&v| v.rem_euclid(q as i64) as u64).collect()
        })
        .collect();
    RingElement { limbs, domain: Domain::Coeff }
}

/// Same, for i128 coefficients (encoded plaintexts can exceed i64 at large scales).
pub fn signed128_to_limbs(params: &CkksParams, basis: &[usize], signed: &[i128]) -> RingElement {
    let limbs = basis
        .iter()
        .map(|&idx| {
            let q = params.prime(idx) as i128;
            signed.iter().map(|&v| v.rem_euclid(q) as u64).collect()
        })
        .collect();
    RingElement { limbs, domain: Domain::Coeff }
}

pub fn forward_ntt(params: &CkksParams, basis: &[usize], a: &mut RingElement) {
    assert_eq!(a.domain, Domain::Coeff);
    assert_eq!(a.limb_count(), basis.len());
    for (limb, &idx) in a.limbs.iter_mut().zip(basis) {
        params.table(idx).forward(limb);
    }
    a.domain = Domain::Eval;
}

pub fn inverse_ntt(params: &CkksParams, basis: &[usize], a: &mut RingElement) {
    assert_eq!(a.domain, Domain::Eval);
    assert_eq!(a.limb_count(), basis.len());
    for (limb, &idx) in a.limbs.iter_mut().zip(basis) {
        params.table(idx).inverse(limb);
    }
    a.domain = Domain::Coeff;
}

pub fn add_assign(params: &CkksParams, basis: &[usize], a: &mut RingElement, b: &RingElement) {
    assert_eq!(a.domain, b.domain);
    for ((la, lb), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(basis) {
        let q = params.prime(idx);
        for (x, &y) in la.iter_mut().zip(lb) {
            *x = add_mod(*x, y, q);
        }
    }
}

pub fn sub_assign(params: &CkksParams, basis: &[usize], a: &mut RingElement, b: &RingElement) {
    assert_eq!(a.domain, b.domain);
    for ((la, lb), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(basis) {
        let q = params.prime(idx);
        for (x, &y) in la.iter_mut().zip(lb) {
            *x = sub_mod(*x, y, q);
        }
    }
}

pub fn negate(params: &CkksParams, basis: &[usize], a: &mut RingElement) {
    for (la, &idx) in a.limbs.iter_mut().zip(basis) {
        let q = params.prime(idx);
        for x in la.iter_mut() {
            if *x != 0 {
                *x = q - *x;
            }
        }
    }
}

/// Pointwise product in the evaluation domain.
pub fn mul_eval(params: &CkksParams, basis: &[usize], a: &RingElement, b: &RingElement) -> RingElement {
    assert_eq!(a.domain, Domain::Eval);
    assert_eq!(b.domain, Domain::Eval);
    let limbs = basis
        .iter()
        .enumerate()
        .map(|(t, &idx)| {
            let q = params.prime(idx);
            a.limbs[t].iter().zip(&b.limbs[t]).map(|(&x, &y)| mul_mod(x, y, q)).collect()
        })
        .collect();
    RingElement { limbs, domain: Domain::Eval }
}

pub fn mul_eval_accumulate(
    params: &CkksParams,
    basis: &[usize],
    acc: &mut RingElement,
    a: &RingElement,
    b: &RingElement,
) {
    assert_eq!(a.domain, Domain::Eval);
    assert_eq!(b.domain, Domain::Eval);
    for (t, &idx) in basis.iter().enumerate() {
        let q = params.prime(idx);
        let (la, lb) = (&a.limbs[t], &b.limbs[t]);
        for (x, (&y, &z)) in acc.limbs[t].iter_mut().zip(la.iter().zip(lb)) {
            *x = add_mod(*x, mul_mod(y, z, q), q);
        }
    }
}

pub fn scalar_mul_limb(params: &CkksParams, chain_idx: usize, limb: &mut [u64], scalar: u64) {
    let q = params.prime(chain_idx);
    for x in limb.iter_mut() {
        *x = mul_mod(*x, scalar, q);
    }
}

/// X -> X^g on signed coefficients (used for the secret key before RNS reduction).
pub fn automorphism_signed(signed: &[i64], g: usize) -> Vec<i64> {
    let n = signed.len();
    let two_n = 2 * n;
    let mut out = vec![0i64; n];
    for (k, &v) in signed.iter().enumerate() {
        let idx = (k * g) % two_n;
        if idx < n {
            out[idx] = v;
        } else {
            out[idx - n] = -v;
        }
    }
    out
}

/// X -> X^g on a coeff-domain element.
pub fn automorphism(params: &CkksParams, basis: &[usize], a: &RingElement, g: usize) -> RingElement {
    assert_eq!(a.domain, Domain::Coeff);
    let n = params.ring_degree();
    let two_n = 2 * n;
    let limbs = basis
        .iter()
        .enumerate()
        .map(|(t, &idx)| {
            let q = params.prime(idx);
            let src = &a.limbs[t];
            let mut out = vec![0u64; n];
            for (k, &v) in src.iter().enumerate() {
                let pos = (k * g) % two_n;
                if pos < n {
                    out[pos] = v;
                } else {
                    out[pos - n] = if v == 0 { 0 } else { q - v };
                }
            }
            out
        })
        .collect();
    RingElement { limbs, domain: Domain::Coeff }
}

/// Uniform element sampled directly in the evaluation domain.
pub fn sample_uniform_eval<R: Rng + ?Sized>(
    params: &CkksParams,
    basis: &[usize],
    rng: &mut R,
) -> RingElement {
    let n = params.ring_degree();
    let limbs = basis
        .iter()
        .map(|&idx| {
            let q = params.prime(idx);
            (0..n).map(|_| rng.random_range(0..q)).collect()
        })
        .collect();
    RingElement { limbs, domain: Domain::Eval }
}

/// Ternary vector with entries in {-1, 0, 1}.
pub fn sample_ternary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1..=1)).collect()
}

/// Rounded centered Gaussian vector.
pub fn sample_gaussian<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    let dist = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n).map(|_| dist.sample(rng).round() as i64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn ntt_roundtrip_on_basis() {
        let params = CkksParams::test_small();
        let basis = params.ks_basis(params.max_level());
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let signed = sample_ternary(params.ring_degree(), &mut rng);
        let mut a = signed_to_limbs(&params, &basis, &signed);
        let orig = a.clone();
        forward_ntt(&params, &basis, &mut a);
        inverse_ntt(&params, &basis, &mut a);
        assert_eq!(a.limbs, orig.limbs);
    }

    #[test]
    fn automorphism_signed_matches_rns() {
        let params = CkksParams::test_small();
        let basis = params.data_basis(1);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let signed = sample_ternary(params.ring_degree(), &mut rng);
        let g = 5usize;
        let direct = signed_to_limbs(&params, &basis, &automorphism_signed(&signed, g));
        let via_rns = automorphism(&params, &basis, &signed_to_limbs(&params, &basis, &signed), g);
        assert_eq!(direct.limbs, via_rns.limbs);
    }

    #[test]
    fn automorphism_composes() {
        // X -> X^a then X -> X^b equals X -> X^{ab mod 2n}
        let params = CkksParams::test_small();
        let basis = params.data_basis(0);
        let n = params.ring_degree();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = signed_to_limbs(&params, &basis, &sample_ternary(n, &mut rng));
        let (g1, g2) = (5usize, 25usize);
        let step1 = automorphism(&params, &basis, &a, g1);
        let step2 = automorphism(&params, &basis, &step1, g2);
        let combined = automorphism(&params, &basis, &a, (g1 * g2) % (2 * n));
        assert_eq!(step2.limbs, combined.limbs);
    }
}
