//! 64-bit modular arithmetic and NTT-friendly prime generation.
//!
//! All moduli in this crate are odd primes below 2^62, so products fit in
//! u128 and Shoup-precomputed multiplication is available for hot loops.

/// `a + b mod q`, assuming both inputs already reduced.
#[inline(always)]
pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

/// `a - b mod q`, assuming both inputs already reduced.
#[inline(always)]
pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

/// `a * b mod q` via 128-bit widening.
#[inline(always)]
pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

/// Shoup companion `floor(w * 2^64 / q)` for fast repeated multiplication by `w`.
#[inline(always)]
pub fn shoup_precompute(w: u64, q: u64) -> u64 {
    (((w as u128) << 64) / q as u128) as u64
}

/// `a * w mod q` where `w_shoup = shoup_precompute(w, q)`. Requires `q < 2^63`.
#[inline(always)]
pub fn mul_mod_shoup(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
    let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(q));
    if r >= q {
        r - q
    } else {
        r
    }
}

/// `base^exp mod q` by square-and-multiply.
pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1u64;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Modular inverse of `a` for prime `q` (Fermat).
pub fn inv_mod(a: u64, q: u64) -> u64 {
    pow_mod(a, q - 2, q)
}

/// Deterministic Miller-Rabin, valid for all u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest prime `p < 2^bits` with `p ≡ 1 (mod 2n)` that is not in `taken`.
///
/// Deterministic for fixed inputs, so a parameter set rebuilt from the same
/// (n, bit-sizes) description yields identical primes.
pub fn find_ntt_prime(n: usize, bits: u32, taken: &[u64]) -> Option<u64> {
    assert!(bits >= 20 && bits <= 61, "prime size out of supported range");
    let step = 2 * n as u64;
    let mut k = ((1u64 << bits) - 2) / step;
    while k > 0 {
        let candidate = k * step + 1;
        if is_prime(candidate) && !taken.contains(&candidate) {
            return Some(candidate);
        }
        k -= 1;
    }
    None
}

/// Primitive 2n-th root of unity mod q (q ≡ 1 mod 2n). Smallest generator base wins,
/// so the result is deterministic per (n, q).
pub fn find_primitive_2n_root(n: usize, q: u64) -> u64 {
    let order = 2 * n as u64;
    debug_assert_eq!((q - 1) % order, 0);
    let quotient = (q - 1) / order;
    for base in 2..q {
        let candidate = pow_mod(base, quotient, q);
        // primitive iff candidate^n = -1
        if pow_mod(candidate, n as u64, q) == q - 1 {
            return candidate;
        }
    }
    unreachable!("no primitive root found for q = {q}");
}
