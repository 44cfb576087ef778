//! Canonical-embedding encoding between real slot vectors and ring elements.
//!
//! Slot j corresponds to evaluation of the message polynomial at zeta^(5^j),
//! zeta = exp(i*pi/n) a primitive 2n-th root of unity. The odd powers of zeta
//! split as <5> and -<5>, so a real slot vector of length n/2 plus its
//! conjugate mirror determines the n polynomial coefficients exactly. Both
//! directions reduce to one size-n complex FFT and a zeta^k twist.

use num_complex::Complex64;
use num_traits::ToPrimitive;

use crate::error::{CkksError, Result};
use crate::params::CkksParams;
use crate::ring::{signed128_to_limbs, Domain, RingElement};

pub(crate) struct EncodingContext {
    n: usize,
    slots: usize,
    twist: Vec<Complex64>,
    twist_inv: Vec<Complex64>,
    tw_pos: Vec<Complex64>,
    tw_neg: Vec<Complex64>,
    slot_u: Vec<usize>,
    slot_u_conj: Vec<usize>,
}

impl EncodingContext {
    pub(crate) fn new(n: usize) -> Self {
        let slots = n / 2;
        let two_n = 2 * n;
        let base = std::f64::consts::PI / n as f64;
        let twist: Vec<Complex64> =
            (0..n).map(|k| Complex64::from_polar(1.0, base * k as f64)).collect();
        let twist_inv: Vec<Complex64> =
            (0..n).map(|k| Complex64::from_polar(1.0, -base * k as f64)).collect();
        let tw_pos: Vec<Complex64> =
            (0..n / 2).map(|j| Complex64::from_polar(1.0, 2.0 * base * j as f64)).collect();
        let tw_neg: Vec<Complex64> =
            (0..n / 2).map(|j| Complex64::from_polar(1.0, -2.0 * base * j as f64)).collect();

        let mut slot_u = Vec::with_capacity(slots);
        let mut slot_u_conj = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            slot_u.push((g - 1) / 2);
            slot_u_conj.push((two_n - g - 1) / 2);
            g = (g * 5) % two_n;
        }

        Self { n, slots, twist, twist_inv, tw_pos, tw_neg, slot_u, slot_u_conj }
    }

    /// In-place radix-2 FFT computing X_k = sum_j a_j e^(sign*2*pi*i*jk/n).
    /// No normalization.
    fn fft(&self, a: &mut [Complex64], positive: bool) {
        let n = a.len();
        debug_assert_eq!(n, self.n);
        let tw = if positive { &self.tw_pos } else { &self.tw_neg };
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                a.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for base in (0..n).step_by(len) {
                for k in 0..half {
                    let w = tw[k * step];
                    let t = w * a[base + half + k];
                    let u = a[base + k];
                    a[base + k] = u + t;
                    a[base + half + k] = u - t;
                }
            }
            len <<= 1;
        }
    }
}

/// A plaintext ready to combine with a ciphertext at a fixed level and scale.
#[derive(Clone, Debug)]
pub struct PlaintextOperand {
    pub poly: RingElement,
    pub level: usize,
    pub scale: f64,
    pub params_fp: [u8; 32],
}

/// Encode a real vector into a ring element at the given level and scale.
pub fn encode(params: &CkksParams, values: &[f64], level: usize, scale: f64) -> Result<PlaintextOperand> {
    let ctx = &params.enc;
    if values.len() > ctx.slots {
        return Err(CkksError::Capacity { got: values.len(), slots: ctx.slots });
    }
    if level > params.max_level() {
        return Err(CkksError::Alignment(format!(
            "level {level} above maximum {}",
            params.max_level()
        )));
    }
    if !(scale > 0.0) {
        return Err(CkksError::InvalidParams("scale must be positive".into()));
    }

    let n = ctx.n;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (j, &v) in values.iter().enumerate() {
        let z = Complex64::new(v, 0.0);
        spectrum[ctx.slot_u[j]] = z;
        spectrum[ctx.slot_u_conj[j]] = z.conj();
    }
    ctx.fft(&mut spectrum, false);

    let inv_n = 1.0 / n as f64;
    let coeffs: Vec<i128> = (0..n)
        .map(|k| {
            let m = (spectrum[k] * ctx.twist_inv[k]).re * inv_n * scale;
            m.round() as i128
        })
        .collect();

    let basis = params.data_basis(level);
    let poly = signed128_to_limbs(params, &basis, &coeffs);
    Ok(PlaintextOperand { poly, level, scale, params_fp: params.fingerprint() })
}

/// Decode a plaintext back to its slot values (full slot vector).
pub fn decode(params: &CkksParams, pt: &PlaintextOperand) -> Result<Vec<f64>> {
    if pt.params_fp != params.fingerprint() {
        return Err(CkksError::KeyMismatch("plaintext belongs to different parameters".into()));
    }
    if pt.poly.domain != Domain::Coeff {
        return Err(CkksError::Alignment("plaintext must be in coefficient domain".into()));
    }
    let ctx = &params.enc;
    let n = ctx.n;
    let coeffs = reconstruct_centered(params, &pt.poly, pt.level);

    let inv_scale = 1.0 / pt.scale;
    let mut twisted: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(coeffs[k] * inv_scale, 0.0) * ctx.twist[k])
        .collect();
    ctx.fft(&mut twisted, true);

    Ok((0..ctx.slots).map(|j| twisted[ctx.slot_u[j]].re).collect())
}

/// CRT-reconstruct residue limbs to centered f64 coefficients.
pub(crate) fn reconstruct_centered(params: &CkksParams, poly: &RingElement, level: usize) -> Vec<f64> {
    use num_bigint::BigUint;
    let crt = &params.crt[level];
    let n = params.ring_degree();
    let limb_count = level + 1;
    debug_assert!(poly.limb_count() >= limb_count);

    (0..n)
        .map(|k| {
            let mut acc = BigUint::from(0u64);
            for i in 0..limb_count {
                acc += &crt.weights[i] * BigUint::from(poly.limbs[i][k]);
            }
            acc %= &crt.q;
            if acc > crt.q_half {
                let neg = &crt.q - &acc;
                -(neg.to_f64().unwrap_or(f64::INFINITY))
            } else {
                acc.to_f64().unwrap_or(f64::INFINITY)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_vector_encodes_to_zero_element() {
        let params = CkksParams::test_small();
        let pt = encode(&params, &vec![0.0; params.slot_count()], params.max_level(), params.default_scale()).unwrap();
        for limb in &pt.poly.limbs {
            assert!(limb.iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn constant_vector_hits_constant_coefficient() {
        let params = CkksParams::test_small();
        let c = 0.375;
        let pt = encode(&params, &vec![c; params.slot_count()], params.max_level(), params.default_scale()).unwrap();
        let expected = (c * params.default_scale()).round() as u64;
        assert_eq!(pt.poly.limbs[0][0], expected);
        // every other coefficient is zero up to rounding
        for limb in &pt.poly.limbs {
            for &coef in &limb[1..] {
                let q = f64::min(coef as f64, (params.prime(0) - coef) as f64);
                assert!(q <= 1.0, "non-constant coefficient too large: {coef}");
            }
        }
    }

    #[test]
    fn roundtrip_uniform_values() {
        let params = CkksParams::test_small();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..params.slot_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pt = encode(&params, &values, params.max_level(), params.default_scale()).unwrap();
        let back = decode(&params, &pt).unwrap();
        let max_err = values
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1e-6, "roundtrip error {max_err}");
    }

    #[test]
    fn rejects_oversized_input() {
        let params = CkksParams::test_small();
        let too_many = vec![0.0; params.slot_count() + 1];
        assert!(matches!(
            encode(&params, &too_many, 0, params.default_scale()),
            Err(CkksError::Capacity { .. })
        ));
    }

    #[test]
    fn partial_vector_pads_with_zero_slots() {
        let params = CkksParams::test_small();
        let pt = encode(&params, &[1.0, -2.0], params.max_level(), params.default_scale()).unwrap();
        let back = decode(&params, &pt).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-9);
        assert!((back[1] + 2.0).abs() < 1e-9);
        for &v in &back[2..] {
            assert!(v.abs() < 1e-9);
        }
    }
}
