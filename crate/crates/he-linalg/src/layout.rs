//! Slot layout for the packed low-rank product.
//!
//! Each input row is replicated r_pad times; every replica spans m_pad slots.
//! Row i, replica rho, column j sits at slot ((i*r_pad) + rho)*m_pad + j of
//! its chunk. m and r pad to powers of two so the shift-and-sum strides are
//! exact; block sizes divide the slot count, so chunks carry whole row blocks
//! and no partial rows.

use crate::error::{LinalgError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackLayout {
    /// Input rows (token count).
    pub d: usize,
    /// True input width.
    pub m: usize,
    /// Input width padded to a power of two.
    pub m_pad: usize,
    /// True LoRA rank.
    pub r: usize,
    /// Rank padded to a power of two.
    pub r_pad: usize,
    /// Output width; at most m_pad.
    pub n: usize,
    /// Row blocks per ciphertext.
    pub rows_per_ct: usize,
    /// Ciphertexts needed for d rows.
    pub ct_count: usize,
    /// SIMD width of the parameter set.
    pub slot_count: usize,
}

impl PackLayout {
    pub fn new(d: usize, m: usize, r: usize, n: usize, slot_count: usize) -> Result<Self> {
        if d == 0 || m == 0 || r == 0 || n == 0 {
            return Err(LinalgError::Layout("all dimensions must be positive".into()));
        }
        let m_pad = m.next_power_of_two();
        let r_pad = r.next_power_of_two();
        if n > m_pad {
            return Err(LinalgError::Layout(format!(
                "output width {n} exceeds padded input width {m_pad}; split the output"
            )));
        }
        let block = r_pad * m_pad;
        if block > slot_count {
            return Err(LinalgError::Layout(format!(
                "row block {block} slots exceeds slot count {slot_count}"
            )));
        }
        let rows_per_ct = slot_count / block;
        let ct_count = d.div_ceil(rows_per_ct);
        Ok(Self { d, m, m_pad, r, r_pad, n, rows_per_ct, ct_count, slot_count })
    }

    pub fn block_size(&self) -> usize {
        self.r_pad * self.m_pad
    }

    /// Slot of (local row, replica, column) inside one ciphertext.
    pub fn slot_of(&self, local_row: usize, replica: usize, col: usize) -> usize {
        (local_row * self.r_pad + replica) * self.m_pad + col
    }

    /// Slot holding result entry (local row, output column).
    pub fn result_slot(&self, local_row: usize, col: usize) -> usize {
        self.slot_of(local_row, 0, col)
    }

    /// Rotation steps the kernel needs: +/-2^j below m_pad and the row-group
    /// strides m_pad * 2^j below r_pad.
    pub fn required_steps(&self) -> Vec<i64> {
        let mut steps = Vec::new();
        let mut s = 1i64;
        while (s as usize) < self.m_pad {
            steps.push(s);
            steps.push(-s);
            s <<= 1;
        }
        let mut g = self.m_pad as i64;
        while (g as usize) < self.block_size() {
            steps.push(g);
            g <<= 1;
        }
        if steps.is_empty() {
            // degenerate 1x1 layout still needs a keyed step for keygen
            steps.push(0);
        }
        steps
    }

    /// Rotations the kernel issues per ciphertext: 2 log2(m_pad) + log2(r_pad).
    pub fn rotations_per_ct(&self) -> usize {
        2 * self.m_pad.trailing_zeros() as usize + self.r_pad.trailing_zeros() as usize
    }

    /// Header encoding: all fields as little-endian u32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let fields = [
            self.d,
            self.m,
            self.m_pad,
            self.r,
            self.r_pad,
            self.n,
            self.rows_per_ct,
            self.ct_count,
            self.slot_count,
        ];
        let mut out = Vec::with_capacity(4 * fields.len());
        for f in fields {
            out.extend_from_slice(&(f as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() != 36 {
            return Err(LinalgError::Layout(format!("layout header is {} bytes, want 36", data.len())));
        }
        let f = |i: usize| u32::from_le_bytes(data[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let layout = PackLayout::new(f(0), f(1), f(3), f(5), f(8))?;
        // reject headers whose derived fields disagree
        if layout.m_pad != f(2) || layout.r_pad != f(4) || layout.rows_per_ct != f(6) || layout.ct_count != f(7) {
            return Err(LinalgError::Layout("derived layout fields do not match".into()));
        }
        Ok(layout)
    }
}
