//! Ciphertext operations: encrypt/decrypt, add, plaintext multiply, rescale,
//! and rotation with key switching.
//!
//! Ciphertext polynomials live in the evaluation domain; plaintext operands
//! stay in coefficient form and are transformed where needed. Every operation
//! except `encrypt` is deterministic for fixed inputs.

use rand::Rng;

use crate::encode::PlaintextOperand;
use crate::error::{CkksError, Result};
use crate::keys::{KskEntry, PublicKeySet, RotationKeys, SecretKey};
use crate::params::CkksParams;
use crate::ring::{
    add_assign, automorphism, forward_ntt, inverse_ntt, mul_eval, mul_eval_accumulate,
    sample_gaussian, sample_ternary, signed_to_limbs, sub_assign, Domain, RingElement,
};

#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub c0: RingElement,
    pub c1: RingElement,
    pub level: usize,
    pub scale: f64,
    pub params_fp: [u8; 32],
}

const SCALE_RTOL: f64 = 1e-9;

fn scales_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCALE_RTOL * a.abs().max(b.abs())
}

pub fn encrypt<R: Rng + ?Sized>(
    params: &CkksParams,
    pt: &PlaintextOperand,
    keys: &PublicKeySet,
    rng: &mut R,
) -> Result<Ciphertext> {
    if pt.params_fp != params.fingerprint() || keys.params_fp != params.fingerprint() {
        return Err(CkksError::KeyMismatch("plaintext/keys built for different parameters".into()));
    }
    let n = params.ring_degree();
    let level = pt.level;
    let basis = params.data_basis(level);

    let mut u = signed_to_limbs(params, &basis, &sample_ternary(n, rng));
    forward_ntt(params, &basis, &mut u);
    let mut e0 = signed_to_limbs(params, &basis, &sample_gaussian(n, params.sigma(), rng));
    forward_ntt(params, &basis, &mut e0);
    let mut e1 = signed_to_limbs(params, &basis, &sample_gaussian(n, params.sigma(), rng));
    forward_ntt(params, &basis, &mut e1);

    let mut m = pt.poly.clone();
    forward_ntt(params, &basis, &mut m);

    let pk_b = keys.pk.b.truncated(basis.len());
    let pk_a = keys.pk.a.truncated(basis.len());

    let mut c0 = mul_eval(params, &basis, &pk_b, &u);
    add_assign(params, &basis, &mut c0, &e0);
    add_assign(params, &basis, &mut c0, &m);
    let mut c1 = mul_eval(params, &basis, &pk_a, &u);
    add_assign(params, &basis, &mut c1, &e1);

    Ok(Ciphertext { c0, c1, level, scale: pt.scale, params_fp: params.fingerprint() })
}

pub fn decrypt(params: &CkksParams, ct: &Ciphertext, sk: &SecretKey) -> Result<PlaintextOperand> {
    if ct.params_fp != params.fingerprint() || sk.params_fp != params.fingerprint() {
        return Err(CkksError::KeyMismatch("ciphertext/key built for different parameters".into()));
    }
    let basis = params.data_basis(ct.level);
    let s = sk.eval.truncated(basis.len());
    let mut m = mul_eval(params, &basis, &ct.c1, &s);
    add_assign(params, &basis, &mut m, &ct.c0);
    inverse_ntt(params, &basis, &mut m);
    Ok(PlaintextOperand { poly: m, level: ct.level, scale: ct.scale, params_fp: ct.params_fp })
}

pub fn add(params: &CkksParams, ct1: &Ciphertext, ct2: &Ciphertext) -> Result<Ciphertext> {
    if ct1.level != ct2.level {
        return Err(CkksError::Alignment(format!(
            "level mismatch: {} vs {}",
            ct1.level, ct2.level
        )));
    }
    if !scales_match(ct1.scale, ct2.scale) {
        return Err(CkksError::Alignment(format!(
            "scale mismatch: {} vs {}",
            ct1.scale, ct2.scale
        )));
    }
    let basis = params.data_basis(ct1.level);
    let mut c0 = ct1.c0.clone();
    add_assign(params, &basis, &mut c0, &ct2.c0);
    let mut c1 = ct1.c1.clone();
    add_assign(params, &basis, &mut c1, &ct2.c1);
    Ok(Ciphertext { c0, c1, level: ct1.level, scale: ct1.scale, params_fp: ct1.params_fp })
}

pub fn add_plain(params: &CkksParams, ct: &Ciphertext, pt: &PlaintextOperand) -> Result<Ciphertext> {
    if ct.level != pt.level {
        return Err(CkksError::Alignment(format!(
            "level mismatch: ciphertext {} vs plaintext {}",
            ct.level, pt.level
        )));
    }
    if !scales_match(ct.scale, pt.scale) {
        return Err(CkksError::Alignment(format!(
            "scale mismatch: ciphertext {} vs plaintext {}",
            ct.scale, pt.scale
        )));
    }
    let basis = params.data_basis(ct.level);
    let mut m = pt.poly.clone();
    forward_ntt(params, &basis, &mut m);
    let mut c0 = ct.c0.clone();
    add_assign(params, &basis, &mut c0, &m);
    Ok(Ciphertext { c0, c1: ct.c1.clone(), level: ct.level, scale: ct.scale, params_fp: ct.params_fp })
}

/// Slot-wise ciphertext-plaintext product. The result carries scale
/// `ct.scale * pt.scale`; the caller rescales.
pub fn cmult_plain(params: &CkksParams, ct: &Ciphertext, pt: &PlaintextOperand) -> Result<Ciphertext> {
    if ct.level != pt.level {
        return Err(CkksError::Alignment(format!(
            "level mismatch: ciphertext {} vs plaintext {}",
            ct.level, pt.level
        )));
    }
    let basis = params.data_basis(ct.level);
    let mut m = pt.poly.clone();
    forward_ntt(params, &basis, &mut m);
    let c0 = mul_eval(params, &basis, &ct.c0, &m);
    let c1 = mul_eval(params, &basis, &ct.c1, &m);
    Ok(Ciphertext {
        c0,
        c1,
        level: ct.level,
        scale: ct.scale * pt.scale,
        params_fp: ct.params_fp,
    })
}

/// Drop the top data prime: level decreases by one, scale divides by the
/// dropped prime, encrypted values are unchanged up to rounding noise.
pub fn rescale(params: &CkksParams, ct: &Ciphertext) -> Result<Ciphertext> {
    if ct.level == 0 {
        return Err(CkksError::LevelExhausted);
    }
    let level = ct.level;
    let basis = params.data_basis(level);
    let dropped = params.prime(level);

    let rescale_poly = |poly: &RingElement| -> RingElement {
        let mut p = poly.clone();
        inverse_ntt(params, &basis, &mut p);
        let top = p.limbs[level].clone();
        let half = dropped / 2;
        let mut out_limbs = Vec::with_capacity(level);
        for j in 0..level {
            let q_j = params.prime(j);
            let inv = params.rescale_inverse(level, j);
            let limb = &p.limbs[j];
            let corrected: Vec<u64> = limb
                .iter()
                .zip(&top)
                .map(|(&c, &r)| {
                    // centered representative of r mod q_j
                    let r_j = if r > half {
                        let neg = dropped - r;
                        (q_j - (neg % q_j)) % q_j
                    } else {
                        r % q_j
                    };
                    let num = crate::arith::sub_mod(c, r_j, q_j);
                    crate::arith::mul_mod(num, inv, q_j)
                })
                .collect();
            out_limbs.push(corrected);
        }
        let mut out = RingElement { limbs: out_limbs, domain: Domain::Coeff };
        let new_basis = params.data_basis(level - 1);
        forward_ntt(params, &new_basis, &mut out);
        out
    };

    let c0 = rescale_poly(&ct.c0);
    let c1 = rescale_poly(&ct.c1);
    Ok(Ciphertext {
        c0,
        c1,
        level: level - 1,
        scale: ct.scale / dropped as f64,
        params_fp: ct.params_fp,
    })
}

/// Rotate slots: slot i of the result holds slot (i + step mod n/2) of the input.
pub fn rotate(
    params: &CkksParams,
    ct: &Ciphertext,
    step: i64,
    keys: &RotationKeys,
) -> Result<Ciphertext> {
    let half = (params.ring_degree() / 2) as i64;
    if step.rem_euclid(half) == 0 {
        return Ok(ct.clone());
    }
    let entry = keys.entry_for_step(params, step)?;
    let g = crate::keys::galois_element(params, step) as usize;

    let level = ct.level;
    let basis = params.data_basis(level);

    let mut c0 = ct.c0.clone();
    let mut c1 = ct.c1.clone();
    inverse_ntt(params, &basis, &mut c0);
    inverse_ntt(params, &basis, &mut c1);
    let c0g = automorphism(params, &basis, &c0, g);
    let c1g = automorphism(params, &basis, &c1, g);

    let (ks0, ks1) = apply_keyswitch(params, level, &c1g, entry);

    let mut new_c0 = c0g;
    add_assign(params, &basis, &mut new_c0, &ks0);
    forward_ntt(params, &basis, &mut new_c0);
    let mut new_c1 = ks1;
    forward_ntt(params, &basis, &mut new_c1);

    Ok(Ciphertext { c0: new_c0, c1: new_c1, level, scale: ct.scale, params_fp: ct.params_fp })
}

/// Switch `poly` (coefficient domain, data limbs at `level`) to the key the
/// entry was generated for. Returns coefficient-domain (d0, d1) such that
/// d0 + d1*s = poly * s_old + small noise.
fn apply_keyswitch(
    params: &CkksParams,
    level: usize,
    poly: &RingElement,
    entry: &KskEntry,
) -> (RingElement, RingElement) {
    let n = params.ring_degree();
    let ks = params.ks_basis(level);
    let ks_len = ks.len();
    let special_pos_full = params.max_level() + 1;

    let mut acc0 = RingElement::zero(n, ks_len, Domain::Eval);
    let mut acc1 = RingElement::zero(n, ks_len, Domain::Eval);

    for i in 0..=level {
        // extend limb i's residues to the whole key-switch basis
        let digit = &poly.limbs[i];
        let q_i = params.prime(i);
        let mut ext_limbs: Vec<Vec<u64>> = Vec::with_capacity(ks_len);
        for &idx in &ks {
            let q_t = params.prime(idx);
            let limb: Vec<u64> = if q_i <= q_t {
                digit.clone()
            } else {
                digit.iter().map(|&v| v % q_t).collect()
            };
            ext_limbs.push(limb);
        }
        let mut ext = RingElement { limbs: ext_limbs, domain: Domain::Coeff };
        forward_ntt(params, &ks, &mut ext);

        // gather the matching limbs of the stored full-basis key
        let (kb, ka) = &entry.parts[i];
        let pick = |src: &RingElement| -> RingElement {
            let mut limbs: Vec<Vec<u64>> = (0..=level).map(|t| src.limbs[t].clone()).collect();
            limbs.push(src.limbs[special_pos_full].clone());
            RingElement { limbs, domain: Domain::Eval }
        };
        mul_eval_accumulate(params, &ks, &mut acc0, &ext, &pick(kb));
        mul_eval_accumulate(params, &ks, &mut acc1, &ext, &pick(ka));
    }

    (mod_down(params, level, acc0, &ks), mod_down(params, level, acc1, &ks))
}

/// Divide by the key-switch prime with centered rounding, returning coefficient
/// domain data limbs.
fn mod_down(params: &CkksParams, level: usize, mut acc: RingElement, ks: &[usize]) -> RingElement {
    inverse_ntt(params, ks, &mut acc);
    let p = params.special_prime();
    let half = p / 2;
    let p_res = acc.limbs[level + 1].clone();

    let mut out_limbs = Vec::with_capacity(level + 1);
    for j in 0..=level {
        let q_j = params.prime(j);
        let inv = params.special_inv_data(j);
        let limb: Vec<u64> = acc.limbs[j]
            .iter()
            .zip(&p_res)
            .map(|(&c, &r)| {
                let r_j = if r > half {
                    let neg = p - r;
                    (q_j - (neg % q_j)) % q_j
                } else {
                    r % q_j
                };
                let num = crate::arith::sub_mod(c, r_j, q_j);
                crate::arith::mul_mod(num, inv, q_j)
            })
            .collect();
        out_limbs.push(limb);
    }
    RingElement { limbs: out_limbs, domain: Domain::Coeff }
}

/// Homomorphic subtraction; same alignment rules as `add`.
pub fn sub(params: &CkksParams, ct1: &Ciphertext, ct2: &Ciphertext) -> Result<Ciphertext> {
    if ct1.level != ct2.level {
        return Err(CkksError::Alignment(format!(
            "level mismatch: {} vs {}",
            ct1.level, ct2.level
        )));
    }
    if !scales_match(ct1.scale, ct2.scale) {
        return Err(CkksError::Alignment(format!(
            "scale mismatch: {} vs {}",
            ct1.scale, ct2.scale
        )));
    }
    let basis = params.data_basis(ct1.level);
    let mut c0 = ct1.c0.clone();
    sub_assign(params, &basis, &mut c0, &ct2.c0);
    let mut c1 = ct1.c1.clone();
    sub_assign(params, &basis, &mut c1, &ct2.c1);
    Ok(Ciphertext { c0, c1, level: ct1.level, scale: ct1.scale, params_fp: ct1.params_fp })
}
