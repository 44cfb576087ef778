//! Binary serialization: little-endian, magic "CKL1", one object per blob.
//!
//! Header layout, shared by every object:
//!   magic "CKL1" (4) | tag (1) | params fingerprint (32) | level (u32) | scale (f64)
//! followed by the tag-specific body. Ring elements are always written as
//! per-limb u64 coefficient arrays in the coefficient domain; evaluation-form
//! polynomials are transformed on the way out and back in. Readers reject any
//! fingerprint that does not match the parameter context they were given.

use crate::encode::PlaintextOperand;
use crate::error::{CkksError, Result};
use crate::keys::{KskEntry, PublicKey, PublicKeySet, RotationKeys, SecretKey};
use crate::ops::Ciphertext;
use crate::params::CkksParams;
use crate::ring::{forward_ntt, inverse_ntt, Domain, RingElement};

pub const MAGIC: &[u8; 4] = b"CKL1";

pub const TAG_PARAMS: u8 = 1;
pub const TAG_SECRET_KEY: u8 = 2;
pub const TAG_PUBLIC_KEYS: u8 = 3;
pub const TAG_PLAINTEXT: u8 = 4;
pub const TAG_CIPHERTEXT: u8 = 5;
pub const TAG_ENC_KEY: u8 = 6;
pub const TAG_ROTATION_KEYS: u8 = 7;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn with_header(tag: u8, fp: &[u8; 32], level: u32, scale: f64) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(MAGIC);
        buf.push(tag);
        buf.extend_from_slice(fp);
        buf.extend_from_slice(&level.to_le_bytes());
        buf.extend_from_slice(&scale.to_le_bytes());
        Self { buf }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }


    fn limbs(&mut self, e: &RingElement) {
        debug_assert_eq!(e.domain, Domain::Coeff);
        self.u32(e.limb_count() as u32);
        for limb in &e.limbs {
            for &c in limb {
                self.u64(c);
            }
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.data.len() {
            return Err(CkksError::Serialization("truncated input".into()));
        }
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fp(&mut self) -> Result<[u8; 32]> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn header(&mut self, expect_tag: u8) -> Result<([u8; 32], u32, f64)> {
        let magic = self.take(4)?;
        if magic != MAGIC {
            return Err(CkksError::Serialization("bad magic".into()));
        }
        let tag = self.u8()?;
        if tag != expect_tag {
            return Err(CkksError::Serialization(format!(
                "unexpected object tag {tag}, wanted {expect_tag}"
            )));
        }
        Ok((self.fp()?, self.u32()?, self.f64()?))
    }

    fn limbs(&mut self, n: usize) -> Result<RingElement> {
        let count = self.u32()? as usize;
        if count > 64 {
            return Err(CkksError::Serialization(format!("unreasonable limb count {count}")));
        }
        let mut limbs = Vec::with_capacity(count);
        for _ in 0..count {
            let mut limb = Vec::with_capacity(n);
            for _ in 0..n {
                limb.push(self.u64()?);
            }
            limbs.push(limb);
        }
        Ok(RingElement { limbs, domain: Domain::Coeff })
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(CkksError::Serialization(format!(
                "{} trailing bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn check_fp(expected: [u8; 32], got: [u8; 32]) -> Result<()> {
    if expected != got {
        return Err(CkksError::KeyMismatch("params fingerprint mismatch".into()));
    }
    Ok(())
}

// ── params ───────────────────────────────────────────────────────────────

pub fn params_to_bytes(params: &CkksParams) -> Vec<u8> {
    let mut w = Writer::with_header(
        TAG_PARAMS,
        &params.fingerprint(),
        params.max_level() as u32,
        params.default_scale(),
    );
    w.buf.extend_from_slice(&CkksParams::body_bytes(
        params.ring_degree(),
        params.modulus_chain(),
        params.scale_bits(),
        params.sigma(),
    ));
    w.buf
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<CkksParams> {
    let mut r = Reader::new(bytes);
    let (fp, _level, _scale) = r.header(TAG_PARAMS)?;
    let n = r.u32()? as usize;
    let chain_len = r.u32()? as usize;
    if chain_len > 64 {
        return Err(CkksError::Serialization("unreasonable chain length".into()));
    }
    let mut chain = Vec::with_capacity(chain_len);
    for _ in 0..chain_len {
        chain.push(r.u64()?);
    }
    let scale_bits = r.u32()?;
    let sigma = r.f64()?;
    r.done()?;
    let params = CkksParams::from_primes(n, chain, scale_bits, sigma)?;
    check_fp(params.fingerprint(), fp)?;
    Ok(params)
}

// ── plaintext / ciphertext ───────────────────────────────────────────────

pub fn plaintext_to_bytes(pt: &PlaintextOperand) -> Vec<u8> {
    let mut w = Writer::with_header(TAG_PLAINTEXT, &pt.params_fp, pt.level as u32, pt.scale);
    w.limbs(&pt.poly);
    w.buf
}

pub fn plaintext_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<PlaintextOperand> {
    let mut r = Reader::new(bytes);
    let (fp, level, scale) = r.header(TAG_PLAINTEXT)?;
    check_fp(params.fingerprint(), fp)?;
    let level = level as usize;
    if level > params.max_level() {
        return Err(CkksError::Serialization(format!("level {level} out of range")));
    }
    let poly = r.limbs(params.ring_degree())?;
    r.done()?;
    if poly.limb_count() != level + 1 {
        return Err(CkksError::Serialization("limb count does not match level".into()));
    }
    Ok(PlaintextOperand { poly, level, scale, params_fp: fp })
}

pub fn ciphertext_to_bytes(params: &CkksParams, ct: &Ciphertext) -> Vec<u8> {
    let basis = (0..=ct.level).collect::<Vec<_>>();
    let mut w = Writer::with_header(TAG_CIPHERTEXT, &ct.params_fp, ct.level as u32, ct.scale);
    for poly in [&ct.c0, &ct.c1] {
        let mut p = poly.clone();
        inverse_ntt(params, &basis, &mut p);
        w.limbs(&p);
    }
    w.buf
}

pub fn ciphertext_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<Ciphertext> {
    let mut r = Reader::new(bytes);
    let (fp, level, scale) = r.header(TAG_CIPHERTEXT)?;
    check_fp(params.fingerprint(), fp)?;
    let level = level as usize;
    if level > params.max_level() {
        return Err(CkksError::Serialization(format!("level {level} out of range")));
    }
    let basis = (0..=level).collect::<Vec<_>>();
    let read_poly = |r: &mut Reader| -> Result<RingElement> {
        let mut p = r.limbs(params.ring_degree())?;
        if p.limb_count() != level + 1 {
            return Err(CkksError::Serialization("limb count does not match level".into()));
        }
        for (t, &idx) in basis.iter().enumerate() {
            let q = params.prime(idx);
            if p.limbs[t].iter().any(|&c| c >= q) {
                return Err(CkksError::Serialization("residue out of range".into()));
            }
        }
        forward_ntt(params, &basis, &mut p);
        Ok(p)
    };
    let c0 = read_poly(&mut r)?;
    let c1 = read_poly(&mut r)?;
    r.done()?;
    Ok(Ciphertext { c0, c1, level, scale, params_fp: fp })
}

// ── keys ─────────────────────────────────────────────────────────────────

pub fn secret_key_to_bytes(params: &CkksParams, sk: &SecretKey) -> Vec<u8> {
    let mut w = Writer::with_header(
        TAG_SECRET_KEY,
        &sk.params_fp,
        params.max_level() as u32,
        1.0,
    );
    w.u32(sk.signed.len() as u32);
    for &v in &sk.signed {
        w.i64(v);
    }
    w.buf
}

pub fn secret_key_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<SecretKey> {
    let mut r = Reader::new(bytes);
    let (fp, _, _) = r.header(TAG_SECRET_KEY)?;
    check_fp(params.fingerprint(), fp)?;
    let n = r.u32()? as usize;
    if n != params.ring_degree() {
        return Err(CkksError::Serialization("secret length != ring degree".into()));
    }
    let mut signed = Vec::with_capacity(n);
    for _ in 0..n {
        signed.push(r.i64()?);
    }
    r.done()?;
    let full = (0..params.modulus_chain().len()).collect::<Vec<_>>();
    let mut eval = crate::ring::signed_to_limbs(params, &full, &signed);
    forward_ntt(params, &full, &mut eval);
    Ok(SecretKey { signed, eval, params_fp: fp })
}

pub fn public_keys_to_bytes(params: &CkksParams, keys: &PublicKeySet) -> Vec<u8> {
    let data = (0..=params.max_level()).collect::<Vec<_>>();
    let full = (0..params.modulus_chain().len()).collect::<Vec<_>>();
    let mut w = Writer::with_header(TAG_PUBLIC_KEYS, &keys.params_fp, params.max_level() as u32, 1.0);

    let write_eval = |w: &mut Writer, poly: &RingElement, basis: &[usize]| {
        let mut p = poly.clone();
        inverse_ntt(params, basis, &mut p);
        w.limbs(&p);
    };

    write_eval(&mut w, &keys.pk.b, &data);
    write_eval(&mut w, &keys.pk.a, &data);

    w.u32(keys.rotations.steps.len() as u32);
    for &s in &keys.rotations.steps {
        w.i64(s);
    }
    w.u32(keys.rotations.by_galois.len() as u32);
    for (&g, entry) in &keys.rotations.by_galois {
        w.u64(g);
        w.u32(entry.parts.len() as u32);
        for (b, a) in &entry.parts {
            write_eval(&mut w, b, &full);
            write_eval(&mut w, a, &full);
        }
    }
    w.buf
}

pub fn public_keys_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<PublicKeySet> {
    let mut r = Reader::new(bytes);
    let (fp, _, _) = r.header(TAG_PUBLIC_KEYS)?;
    check_fp(params.fingerprint(), fp)?;
    let n = params.ring_degree();
    let data = (0..=params.max_level()).collect::<Vec<_>>();
    let full = (0..params.modulus_chain().len()).collect::<Vec<_>>();

    let read_eval = |r: &mut Reader, basis: &[usize]| -> Result<RingElement> {
        let mut p = r.limbs(n)?;
        if p.limb_count() != basis.len() {
            return Err(CkksError::Serialization("key limb count mismatch".into()));
        }
        forward_ntt(params, basis, &mut p);
        Ok(p)
    };

    let b = read_eval(&mut r, &data)?;
    let a = read_eval(&mut r, &data)?;

    let step_count = r.u32()? as usize;
    if step_count > 4096 {
        return Err(CkksError::Serialization("unreasonable step count".into()));
    }
    let mut steps = Vec::with_capacity(step_count);
    for _ in 0..step_count {
        steps.push(r.i64()?);
    }
    let entry_count = r.u32()? as usize;
    if entry_count > 4096 {
        return Err(CkksError::Serialization("unreasonable entry count".into()));
    }
    let mut by_galois = std::collections::BTreeMap::new();
    for _ in 0..entry_count {
        let g = r.u64()?;
        let part_count = r.u32()? as usize;
        if part_count != params.max_level() + 1 {
            return Err(CkksError::Serialization("key-switch part count mismatch".into()));
        }
        let mut parts = Vec::with_capacity(part_count);
        for _ in 0..part_count {
            let b_i = read_eval(&mut r, &full)?;
            let a_i = read_eval(&mut r, &full)?;
            parts.push((b_i, a_i));
        }
        by_galois.insert(g, KskEntry { parts });
    }
    r.done()?;

    let mut set = PublicKeySet {
        pk: PublicKey { b, a },
        rotations: RotationKeys { by_galois, steps },
        params_fp: fp,
        fingerprint: [0u8; 32],
    };
    set.fingerprint = crate::keys::public_fingerprint(params, &set);
    Ok(set)
}

// Split encodings for the wire: the encryption key travels in the handshake's
// PUBKEY message, the (much larger) rotation keys separately so a fingerprint
// cache hit can skip them.

pub fn enc_key_to_bytes(params: &CkksParams, keys: &PublicKeySet) -> Vec<u8> {
    let data = (0..=params.max_level()).collect::<Vec<_>>();
    let mut w = Writer::with_header(TAG_ENC_KEY, &keys.params_fp, params.max_level() as u32, 1.0);
    for poly in [&keys.pk.b, &keys.pk.a] {
        let mut p = (*poly).clone();
        inverse_ntt(params, &data, &mut p);
        w.limbs(&p);
    }
    w.buf
}

pub fn enc_key_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<PublicKey> {
    let mut r = Reader::new(bytes);
    let (fp, _, _) = r.header(TAG_ENC_KEY)?;
    check_fp(params.fingerprint(), fp)?;
    let data = (0..=params.max_level()).collect::<Vec<_>>();
    let read_eval = |r: &mut Reader| -> Result<RingElement> {
        let mut p = r.limbs(params.ring_degree())?;
        if p.limb_count() != data.len() {
            return Err(CkksError::Serialization("key limb count mismatch".into()));
        }
        forward_ntt(params, &data, &mut p);
        Ok(p)
    };
    let b = read_eval(&mut r)?;
    let a = read_eval(&mut r)?;
    r.done()?;
    Ok(PublicKey { b, a })
}

pub fn rotation_keys_to_bytes(params: &CkksParams, keys: &PublicKeySet) -> Vec<u8> {
    let full = (0..params.modulus_chain().len()).collect::<Vec<_>>();
    let mut w =
        Writer::with_header(TAG_ROTATION_KEYS, &keys.params_fp, params.max_level() as u32, 1.0);
    w.u32(keys.rotations.steps.len() as u32);
    for &s in &keys.rotations.steps {
        w.i64(s);
    }
    w.u32(keys.rotations.by_galois.len() as u32);
    for (&g, entry) in &keys.rotations.by_galois {
        w.u64(g);
        w.u32(entry.parts.len() as u32);
        for (b, a) in &entry.parts {
            for poly in [b, a] {
                let mut p = poly.clone();
                inverse_ntt(params, &full, &mut p);
                w.limbs(&p);
            }
        }
    }
    w.buf
}

pub fn rotation_keys_from_bytes(params: &CkksParams, bytes: &[u8]) -> Result<RotationKeys> {
    let mut r = Reader::new(bytes);
    let (fp, _, _) = r.header(TAG_ROTATION_KEYS)?;
    check_fp(params.fingerprint(), fp)?;
    let full = (0..params.modulus_chain().len()).collect::<Vec<_>>();
    let read_eval = |r: &mut Reader| -> Result<RingElement> {
        let mut p = r.limbs(params.ring_degree())?;
        if p.limb_count() != full.len() {
            return Err(CkksError::Serialization("key limb count mismatch".into()));
        }
        forward_ntt(params, &full, &mut p);
        Ok(p)
    };
    let step_count = r.u32()? as usize;
    if step_count > 4096 {
        return Err(CkksError::Serialization("unreasonable step count".into()));
    }
    let mut steps = Vec::with_capacity(step_count);
    for _ in 0..step_count {
        steps.push(r.i64()?);
    }
    let entry_count = r.u32()? as usize;
    if entry_count > 4096 {
        return Err(CkksError::Serialization("unreasonable entry count".into()));
    }
    let mut by_galois = std::collections::BTreeMap::new();
    for _ in 0..entry_count {
        let g = r.u64()?;
        let part_count = r.u32()? as usize;
        if part_count != params.max_level() + 1 {
            return Err(CkksError::Serialization("key-switch part count mismatch".into()));
        }
        let mut parts = Vec::with_capacity(part_count);
        for _ in 0..part_count {
            let b_i = read_eval(&mut r)?;
            let a_i = read_eval(&mut r)?;
            parts.push((b_i, a_i));
        }
        by_galois.insert(g, KskEntry { parts });
    }
    r.done()?;
    Ok(RotationKeys { by_galois, steps })
}

/// Reassemble a public key set from its wire halves.
pub fn assemble_public_keys(
    params: &CkksParams,
    pk: PublicKey,
    rotations: RotationKeys,
) -> PublicKeySet {
    let mut set = PublicKeySet {
        pk,
        rotations,
        params_fp: params.fingerprint(),
        fingerprint: [0u8; 32],
    };
    set.fingerprint = crate::keys::public_fingerprint(params, &set);
    set
}
