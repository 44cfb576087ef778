//! Parameter context: ring degree, RNS modulus chain, precomputed tables.
//!
//! The chain holds `L+2` primes: indices `0..=L` carry ciphertext data
//! (`L = max_level`, fresh ciphertexts start there), and the final prime
//! backs key switching only — it never holds data and is not counted as a
//! level. Rescaling drops data primes from the top (`chain[level]`), so with
//! the default 60/40/40/40/60-bit layout the three 40-bit primes are consumed
//! by multiplications and the wide base prime keeps decryption headroom.

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::arith::{find_ntt_prime, inv_mod};
use crate::encode::EncodingContext;
use crate::error::{CkksError, Result};
use crate::ntt::NttTable;

/// Default ring degree. Desk-scale security note: parameters here are for a
/// working artifact, not a certified deployment; the chain exceeds the
/// standard 128-bit budget for N=8192 and should be treated as toy unless
/// re-derived against a lattice estimator.
pub const DEFAULT_RING_DEGREE: usize = 8192;
pub const DEFAULT_CHAIN_BITS: [u32; 5] = [60, 40, 40, 40, 60];
pub const DEFAULT_SCALE_BITS: u32 = 40;
pub const DEFAULT_SIGMA: f64 = 3.2;

/// Per-level CRT reconstruction constants (data primes `0..=level`).
pub(crate) struct CrtLevel {
    pub q: BigUint,
    pub q_half: BigUint,
    /// weights[i] = (Q/q_i) * ((Q/q_i)^{-1} mod q_i)  (mod Q)
    pub weights: Vec<BigUint>,
}

pub struct CkksParams {
    n: usize,
    chain: Vec<u64>,
    scale_bits: u32,
    sigma: f64,
    tables: Vec<NttTable>,
    fingerprint: [u8; 32],
    pub(crate) enc: EncodingContext,
    /// rescale_inv[l][j] = q_l^{-1} mod q_j for j < l
    rescale_inv: Vec<Vec<u64>>,
    /// special prime P reduced mod each data prime
    special_mod: Vec<u64>,
    /// P^{-1} mod each data prime
    special_inv: Vec<u64>,
    pub(crate) crt: Vec<CrtLevel>,
}

impl CkksParams {
    /// Build a parameter set by searching NTT-friendly primes of the given
    /// bit sizes. The last entry is the key-switching prime.
    pub fn new(n: usize, chain_bits: &[u32], scale_bits: u32) -> Result<Self> {
        let mut primes = Vec::with_capacity(chain_bits.len());
        for &bits in chain_bits {
            let p = find_ntt_prime(n, bits, &primes).ok_or_else(|| {
                CkksError::InvalidParams(format!("no {bits}-bit NTT prime for degree {n}"))
            })?;
            primes.push(p);
        }
        Self::from_primes(n, primes, scale_bits, DEFAULT_SIGMA)
    }

    /// The paper-scale default: N = 8192, 60/40/40/40/60-bit chain, scale 2^40.
    pub fn recommended() -> Self {
        Self::new(DEFAULT_RING_DEGREE, &DEFAULT_CHAIN_BITS, DEFAULT_SCALE_BITS)
            .expect("default parameters are valid")
    }

    /// Small-ring profile for fast tests and CI; same chain shape, N = 2048.
    pub fn test_small() -> Self {
        Self::new(2048, &[50, 40, 40, 40, 50], DEFAULT_SCALE_BITS).expect("test parameters are valid")
    }

    pub fn from_primes(n: usize, chain: Vec<u64>, scale_bits: u32, sigma: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 8 {
            return Err(CkksError::InvalidParams(format!(
                "ring degree {n} is not a power of two >= 8"
            )));
        }
        // depth 3 pipeline + final data prime + key-switch prime
        if chain.len() < 5 {
            return Err(CkksError::InvalidParams(format!(
                "modulus chain has {} primes, need at least 5",
                chain.len()
            )));
        }
        let two_n = 2 * n as u64;
        for (i, &q) in chain.iter().enumerate() {
            if q % two_n != 1 {
                return Err(CkksError::InvalidParams(format!(
                    "chain[{i}] = {q} is not 1 mod 2N"
                )));
            }
            if !crate::arith::is_prime(q) {
                return Err(CkksError::InvalidParams(format!("chain[{i}] = {q} is not prime")));
            }
            if q >= 1u64 << 62 {
                return Err(CkksError::InvalidParams(format!("chain[{i}] = {q} too large")));
            }
            if chain[..i].contains(&q) {
                return Err(CkksError::InvalidParams(format!("chain[{i}] = {q} repeated")));
            }
        }
        if scale_bits == 0 || scale_bits > 50 {
            return Err(CkksError::InvalidParams(format!(
                "scale 2^{scale_bits} out of supported range"
            )));
        }

        let tables: Vec<NttTable> = chain.iter().map(|&q| NttTable::new(n, q)).collect();
        let max_level = chain.len() - 2;
        let special = chain[chain.len() - 1];

        let rescale_inv = (0..chain.len() - 1)
            .map(|l| (0..l).map(|j| inv_mod(chain[l] % chain[j], chain[j])).collect())
            .collect();
        let special_mod: Vec<u64> = chain[..=max_level].iter().map(|&q| special % q).collect();
        let special_inv: Vec<u64> =
            chain[..=max_level].iter().map(|&q| inv_mod(special % q, q)).collect();

        let crt = (0..=max_level)
            .map(|level| {
                let q: BigUint = chain[..=level].iter().map(|&p| BigUint::from(p)).product();
                let weights = (0..=level)
                    .map(|i| {
                        let qi = BigUint::from(chain[i]);
                        let m = &q / &qi;
                        let m_mod_qi = (&m % &qi).to_u64_digits().first().copied().unwrap_or(0);
                        let y = inv_mod(m_mod_qi, chain[i]);
                        (m * BigUint::from(y)) % &q
                    })
                    .collect();
                let q_half = &q >> 1;
                CrtLevel { q, q_half, weights }
            })
            .collect();

        let fingerprint = {
            let mut h = Sha256::new();
            h.update(Self::body_bytes(n, &chain, scale_bits, sigma));
            h.finalize().into()
        };

        Ok(Self {
            n,
            chain,
            scale_bits,
            sigma,
            tables,
            fingerprint,
            enc: EncodingContext::new(n),
            rescale_inv,
            special_mod,
            special_inv,
            crt,
        })
    }

    pub(crate) fn body_bytes(n: usize, chain: &[u64], scale_bits: u32, sigma: f64) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * chain.len());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(chain.len() as u32).to_le_bytes());
        for &q in chain {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&scale_bits.to_le_bytes());
        out.extend_from_slice(&sigma.to_le_bytes());
        out
    }

    pub fn ring_degree(&self) -> usize {
        self.n
    }

    pub fn slot_count(&self) -> usize {
        self.n / 2
    }

    pub fn modulus_chain(&self) -> &[u64] {
        &self.chain
    }

    /// Highest level a fresh ciphertext carries (chain minus the key-switch prime).
    pub fn max_level(&self) -> usize {
        self.chain.len() - 2
    }

    pub(crate) fn special_index(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn special_prime(&self) -> u64 {
        self.chain[self.special_index()]
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn default_scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub(crate) fn table(&self, chain_idx: usize) -> &NttTable {
        &self.tables[chain_idx]
    }

    pub fn prime(&self, chain_idx: usize) -> u64 {
        self.chain[chain_idx]
    }

    /// Chain indices of the data limbs at `level`.
    pub(crate) fn data_basis(&self, level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    /// Chain indices of the key-switching basis at `level`: data limbs plus P.
    pub(crate) fn ks_basis(&self, level: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..=level).collect();
        v.push(self.special_index());
        v
    }

    pub(crate) fn rescale_inverse(&self, dropped: usize, target: usize) -> u64 {
        self.rescale_inv[dropped][target]
    }

    pub(crate) fn special_mod_data(&self, j: usize) -> u64 {
        self.special_mod[j]
    }

    pub(crate) fn special_inv_data(&self, j: usize) -> u64 {
        self.special_inv[j]
    }
}

impl std::fmt::Debug for CkksParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CkksParams")
            .field("n", &self.n)
            .field("chain", &self.chain)
            .field("scale_bits", &self.scale_bits)
            .finish()
    }
}
