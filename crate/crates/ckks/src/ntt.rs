//! Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
//!
//! Cooley-Tukey forward / Gentleman-Sande inverse with psi-power tables in
//! bit-reversed order and Shoup companions, so the butterfly inner loop does
//! no 128-bit division.

use crate::arith::{add_mod, find_primitive_2n_root, inv_mod, mul_mod, mul_mod_shoup, shoup_precompute, sub_mod};

/// Per-prime NTT tables for a fixed ring degree n.
#[derive(Clone)]
pub struct NttTable {
    pub q: u64,
    pub n: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - bits)
}

impl NttTable {
    pub fn new(n: usize, q: u64) -> Self {
        assert!(n.is_power_of_two());
        assert_eq!((q - 1) % (2 * n as u64), 0, "q must be 1 mod 2n");
        let psi = find_primitive_2n_root(n, q);
        let psi_inv = inv_mod(psi, q);
        let bits = n.trailing_zeros();

        let mut pow = vec![0u64; n];
        let mut pow_inv = vec![0u64; n];
        let (mut cur, mut cur_inv) = (1u64, 1u64);
        for i in 0..n {
            pow[i] = cur;
            pow_inv[i] = cur_inv;
            cur = mul_mod(cur, psi, q);
            cur_inv = mul_mod(cur_inv, psi_inv, q);
        }

        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[i] = pow[r];
            psi_inv_rev[i] = pow_inv[r];
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| shoup_precompute(w, q)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| shoup_precompute(w, q)).collect();
        let n_inv = inv_mod(n as u64, q);

        Self {
            q,
            n,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: shoup_precompute(n_inv, q),
        }
    }

    /// In-place forward negacyclic NTT (coefficient order in, bit-reversed
    /// evaluation order out).
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let j2 = j1 + t;
                let s = self.psi_rev[m + i];
                let s_sh = self.psi_rev_shoup[m + i];
                for j in j1..j2 {
                    let u = a[j];
                    let v = mul_mod_shoup(a[j + t], s, s_sh, q);
                    a[j] = add_mod(u, v, q);
                    a[j + t] = sub_mod(u, v, q);
                }
            }
            m <<= 1;
        }
    }

    /// In-place inverse negacyclic NTT, including the 1/n scaling.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let j2 = j1 + t;
                let s = self.psi_inv_rev[h + i];
                let s_sh = self.psi_inv_rev_shoup[h + i];
                for j in j1..j2 {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, q);
                    a[j + t] = mul_mod_shoup(sub_mod(u, v, q), s, s_sh, q);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod_shoup(*x, self.n_inv, self.n_inv_shoup, q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::find_ntt_prime;

    fn lcg(state: &mut u64) -> u64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *state
    }

    #[test]
    fn roundtrip_identity() {
        for n in [8usize, 64, 1024] {
            let q = find_ntt_prime(n, 45, &[]).unwrap();
            let table = NttTable::new(n, q);
            let mut state = 42u64;
            let original: Vec<u64> = (0..n).map(|_| lcg(&mut state) % q).collect();
            let mut a = original.clone();
            table.forward(&mut a);
            table.inverse(&mut a);
            assert_eq!(a, original);
        }
    }

    /// Negacyclic convolution by schoolbook, reduced mod (X^n + 1, q).
    fn negacyclic_mul_naive(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let prod = mul_mod(a[i], b[j], q);
                let k = i + j;
                if k < n {
                    out[k] = add_mod(out[k], prod, q);
                } else {
                    out[k - n] = sub_mod(out[k - n], prod, q);
                }
            }
        }
        out
    }

    #[test]
    fn pointwise_product_is_negacyclic_convolution() {
        let n = 64;
        let q = find_ntt_prime(n, 40, &[]).unwrap();
        let table = NttTable::new(n, q);
        let mut state = 7u64;
        let a: Vec<u64> = (0..n).map(|_| lcg(&mut state) % q).collect();
        let b: Vec<u64> = (0..n).map(|_| lcg(&mut state) % q).collect();
        let expected = negacyclic_mul_naive(&a, &b, q);

        let (mut fa, mut fb) = (a.clone(), b.clone());
        table.forward(&mut fa);
        table.forward(&mut fb);
        let mut fc: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| mul_mod(x, y, q)).collect();
        table.inverse(&mut fc);
        assert_eq!(fc, expected);
    }
}
