//! Checks the encoder against an independent high-precision canonical
//! embedding oracle.
//!
//! The oracle evaluates the encoded integer polynomial at zeta^(5^j),
//! zeta = exp(i*pi/n), using fixed-point arithmetic with 192 fractional bits
//! on BigInt (cos/sin by Taylor series from a hard-coded 256-bit value of pi).
//! It shares no code with the FFT encoder it validates.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use plora_ckks::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const FRAC_BITS: u32 = 192;

/// First 64 hex digits of the fractional part of pi.
const PI_HEX_FRAC: &str = "243F6A8885A308D313198A2E03707344A4093822299F31D0082EFA98EC4E6C89";

fn one() -> BigInt {
    BigInt::from(1) << FRAC_BITS
}

fn shr_round(x: &BigInt, bits: u32) -> BigInt {
    (x + (BigInt::from(1) << (bits - 1))) >> bits
}

fn fmul(a: &BigInt, b: &BigInt) -> BigInt {
    shr_round(&(a * b), FRAC_BITS)
}

fn pi_fixed() -> BigInt {
    let frac = BigInt::parse_bytes(PI_HEX_FRAC.as_bytes(), 16).unwrap();
    (BigInt::from(3) << FRAC_BITS) + shr_round(&frac, 256 - FRAC_BITS)
}

/// cos and sin of theta by Taylor series; converges in a handful of terms for
/// the tiny angles pi/n used here.
fn cos_sin(theta: &BigInt) -> (BigInt, BigInt) {
    let theta_sq = fmul(theta, theta);

    let mut cos = BigInt::zero();
    let mut term = one();
    let mut k = 0u64;
    while !term.is_zero() {
        cos += &term;
        // t_{k+1} = -t_k * theta^2 / ((2k+1)(2k+2))
        term = -fmul(&term, &theta_sq) / BigInt::from((2 * k + 1) * (2 * k + 2));
        k += 1;
        assert!(k < 64, "cosine series failed to converge");
    }

    let mut sin = BigInt::zero();
    let mut term = theta.clone();
    let mut k = 0u64;
    while !term.is_zero() {
        sin += &term;
        term = -fmul(&term, &theta_sq) / BigInt::from((2 * k + 2) * (2 * k + 3));
        k += 1;
        assert!(k < 64, "sine series failed to converge");
    }
    (cos, sin)
}

#[derive(Clone)]
struct Cx {
    re: BigInt,
    im: BigInt,
}

fn cmul(a: &Cx, b: &Cx) -> Cx {
    Cx {
        re: fmul(&a.re, &b.re) - fmul(&a.im, &b.im),
        im: fmul(&a.re, &b.im) + fmul(&a.im, &b.re),
    }
}

fn cpow(base: &Cx, mut exp: u64) -> Cx {
    let mut acc = Cx { re: one(), im: BigInt::zero() };
    let mut sq = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            acc = cmul(&acc, &sq);
        }
        sq = cmul(&sq, &sq);
        exp >>= 1;
    }
    acc
}

/// Horner evaluation of an integer-coefficient polynomial at a fixed-point
/// complex argument. Returns the value as f64.
fn eval_poly(coeffs: &[i64], x: &Cx) -> (f64, f64) {
    let mut acc = Cx { re: BigInt::zero(), im: BigInt::zero() };
    for &c in coeffs.iter().rev() {
        acc = cmul(&acc, x);
        acc.re += BigInt::from(c) << FRAC_BITS;
    }
    let to_f64 = |v: &BigInt| {
        let scaled = v.to_f64().unwrap();
        scaled / (1u128 << 64) as f64 / (1u128 << 64) as f64 / (1u128 << 64) as f64
    };
    (to_f64(&acc.re), to_f64(&acc.im))
}

/// Centered coefficients of a level-0 plaintext (single RNS limb).
fn centered_coeffs(params: &CkksParams, pt: &PlaintextOperand) -> Vec<i64> {
    assert_eq!(pt.level, 0);
    let q = params.prime(0);
    pt.poly.limbs[0]
        .iter()
        .map(|&c| if c > q / 2 { c as i64 - q as i64 } else { c as i64 })
        .collect()
}

fn check_params(params: &CkksParams, checked_slots: usize, seed: u64) {
    let n = params.ring_degree();
    let slots = params.slot_count();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..slots).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = params.default_scale();

    let pt = encode(params, &values, 0, scale).unwrap();
    let coeffs = centered_coeffs(params, &pt);

    let theta = shr_round(&(pi_fixed() << 8), 8 + n.trailing_zeros()); // pi / n
    let (c, s) = cos_sin(&theta);
    let zeta = Cx { re: c, im: s };

    // slot j corresponds to evaluation at zeta^(5^j mod 2n)
    let mut worst = 0.0f64;
    for t in 0..checked_slots {
        let j = if t == 0 { 0 } else { rng.random_range(0..slots) };
        let mut g = 1u64;
        for _ in 0..j {
            g = (g * 5) % (2 * n as u64);
        }
        let point = cpow(&zeta, g);
        let (re, im) = eval_poly(&coeffs, &point);
        let err = ((re / scale) - values[j]).abs();
        worst = worst.max(err);
        assert!(
            err <= 1e-6,
            "slot {j}: oracle evaluation {re} vs expected {}",
            values[j] * scale
        );
        // imaginary part of a real encoding must vanish
        assert!((im / scale).abs() <= 1e-6, "slot {j}: imaginary residue {im}");
    }

    // the decoder agrees with the oracle-checked encoding
    let back = decode(params, &pt).unwrap();
    let max_err = values
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err <= 1e-6, "decode error {max_err}");
    println!("n={n}: worst oracle error {worst:.3e}, decode error {max_err:.3e}");
}

#[test]
fn oracle_small_ring() {
    let params = CkksParams::test_small();
    check_params(&params, 12, 101);
}

#[test]
fn oracle_default_ring() {
    // N = 8192, scale 2^40, uniform values in [-1, 1]
    let params = CkksParams::recommended();
    check_params(&params, 6, 202);
}

#[test]
fn pi_constant_sanity() {
    let pi = pi_fixed();
    let approx = pi.to_f64().unwrap() / 2f64.powi(FRAC_BITS as i32);
    assert!((approx - std::f64::consts::PI).abs() < 1e-15);
    let (c, s) = cos_sin(&shr_round(&(pi_fixed() << 8), 8 + 11)); // pi / 2048
    let cf = c.to_f64().unwrap() / 2f64.powi(FRAC_BITS as i32);
    let sf = s.to_f64().unwrap() / 2f64.powi(FRAC_BITS as i32);
    assert!((cf - (std::f64::consts::PI / 2048.0).cos()).abs() < 1e-15);
    assert!((sf - (std::f64::consts::PI / 2048.0).sin()).abs() < 1e-15);
}
