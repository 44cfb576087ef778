//! Key generation: ternary secret, RLWE public key, rotation key-switching keys.
//!
//! Rotation keys use per-limb decomposition with one auxiliary prime P (the
//! last chain entry). The key for data limb i encrypts P * E_i * s(X^g) under
//! s, where E_i is the CRT unit vector of limb i; switching then costs one
//! inner product over the extended basis and a ModDown by P, and the same key
//! set works at every level.

use rand::Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use crate::error::{CkksError, Result};
use crate::params::CkksParams;
use crate::ring::{
    add_assign, automorphism_signed, forward_ntt, mul_eval, negate, sample_gaussian,
    sample_ternary, sample_uniform_eval, scalar_mul_limb, signed_to_limbs, RingElement,
};

pub struct SecretKey {
    /// Ternary coefficients, kept for serialization and automorphisms.
    pub(crate) signed: Vec<i64>,
    /// Evaluation-domain limbs over the full chain (data primes + P).
    pub(crate) eval: RingElement,
    pub params_fp: [u8; 32],
}

/// One key-switching key: per data limb, a pair (b_i, a_i) over the full basis.
#[derive(Clone)]
pub struct KskEntry {
    pub(crate) parts: Vec<(RingElement, RingElement)>,
}

#[derive(Clone)]
pub struct RotationKeys {
    /// Keyed by Galois element 5^step mod 2n, so equivalent steps share a key.
    pub(crate) by_galois: BTreeMap<u64, KskEntry>,
    /// The step set as declared at generation time.
    pub steps: Vec<i64>,
}

#[derive(Clone)]
pub struct PublicKey {
    pub(crate) b: RingElement,
    pub(crate) a: RingElement,
}

/// Everything the non-secret-holding party may see.
#[derive(Clone)]
pub struct PublicKeySet {
    pub pk: PublicKey,
    pub rotations: RotationKeys,
    pub params_fp: [u8; 32],
    /// Hash of the serialized public material.
    pub fingerprint: [u8; 32],
}

pub struct KeyMaterial {
    pub secret: SecretKey,
    pub public: PublicKeySet,
}

/// Galois element for a slot rotation by `step`.
pub fn galois_element(params: &CkksParams, step: i64) -> u64 {
    let half = (params.ring_degree() / 2) as i64;
    let e = step.rem_euclid(half) as u64;
    crate::arith::pow_mod(5, e, 2 * params.ring_degree() as u64)
}

pub fn keygen<R: Rng + ?Sized>(
    params: &CkksParams,
    rotation_steps: &[i64],
    rng: &mut R,
) -> Result<KeyMaterial> {
    if rotation_steps.is_empty() {
        return Err(CkksError::InvalidParams("rotation step set must not be empty".into()));
    }
    let n = params.ring_degree();
    let full = params.ks_basis(params.max_level());
    let data = params.data_basis(params.max_level());

    let s_signed = sample_ternary(n, rng);
    let mut s_eval = signed_to_limbs(params, &full, &s_signed);
    forward_ntt(params, &full, &mut s_eval);

    // public key over the data basis
    let a = sample_uniform_eval(params, &data, rng);
    let mut e = signed_to_limbs(params, &data, &sample_gaussian(n, params.sigma(), rng));
    forward_ntt(params, &data, &mut e);
    let s_data = s_eval.truncated(data.len());
    let mut b = mul_eval(params, &data, &a, &s_data);
    negate(params, &data, &mut b);
    add_assign(params, &data, &mut b, &e);
    let pk = PublicKey { b, a };

    // rotation keys, one entry per distinct Galois element
    let mut by_galois = BTreeMap::new();
    for &step in rotation_steps {
        let g = galois_element(params, step);
        if by_galois.contains_key(&g) {
            continue;
        }
        let sg_signed = automorphism_signed(&s_signed, g as usize);
        let mut sg_eval = signed_to_limbs(params, &full, &sg_signed);
        forward_ntt(params, &full, &mut sg_eval);

        let mut parts = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let a_i = sample_uniform_eval(params, &full, rng);
            let mut b_i = mul_eval(params, &full, &a_i, &s_eval);
            negate(params, &full, &mut b_i);
            let mut e_i = signed_to_limbs(params, &full, &sample_gaussian(n, params.sigma(), rng));
            forward_ntt(params, &full, &mut e_i);
            add_assign(params, &full, &mut b_i, &e_i);
            // fold in P * s(X^g) at limb i only
            let mut payload = sg_eval.limbs[i].clone();
            scalar_mul_limb(params, i, &mut payload, params.special_mod_data(i));
            let q_i = params.prime(i);
            for (x, &y) in b_i.limbs[i].iter_mut().zip(&payload) {
                *x = crate::arith::add_mod(*x, y, q_i);
            }
            parts.push((b_i, a_i));
        }
        by_galois.insert(g, KskEntry { parts });
    }

    let rotations = RotationKeys { by_galois, steps: rotation_steps.to_vec() };
    let mut public = PublicKeySet {
        pk,
        rotations,
        params_fp: params.fingerprint(),
        fingerprint: [0u8; 32],
    };
    public.fingerprint = public_fingerprint(params, &public);

    let secret = SecretKey { signed: s_signed, eval: s_eval, params_fp: params.fingerprint() };
    Ok(KeyMaterial { secret, public })
}

/// Deterministic hash of the public material.
pub fn public_fingerprint(params: &CkksParams, keys: &PublicKeySet) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(params.fingerprint());
    for limb in keys.pk.b.limbs.iter().chain(keys.pk.a.limbs.iter()) {
        for &c in limb {
            h.update(c.to_le_bytes());
        }
    }
    for (&g, entry) in &keys.rotations.by_galois {
        h.update(g.to_le_bytes());
        for (b, a) in &entry.parts {
            for limb in b.limbs.iter().chain(a.limbs.iter()) {
                for &c in limb {
                    h.update(c.to_le_bytes());
                }
            }
        }
    }
    h.finalize().into()
}

impl RotationKeys {
    pub fn entry_for_step(&self, params: &CkksParams, step: i64) -> Result<&KskEntry> {
        let g = galois_element(params, step);
        self.by_galois.get(&g).ok_or(CkksError::MissingRotationKey(step))
    }

    pub fn covers_step(&self, params: &CkksParams, step: i64) -> bool {
        self.by_galois.contains_key(&galois_element(params, step))
    }
}
