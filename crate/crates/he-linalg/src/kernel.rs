//! The encrypted low-rank product: pack, apply, extract.
//!
//! Per chunk the kernel runs
//!   1. multiply by the A1 operand, rescale, shift-and-sum over m_pad
//!   2. mask replica-row heads, rescale, replicate back across m_pad
//!   3. multiply by the A2 operand, rescale, sum row groups over r_pad
//!   4. add the Q_t-plus-junk operand
//! consuming exactly three levels and 2 log2(m_pad) + log2(r_pad) rotations.
//! Chunks are independent; `parallel` fans them out across threads against
//! shared read-only operands and keys.

use ndarray::Array2;
use plora_ckks::{
    add, add_plain, cmult_plain, decode, decrypt, encode, encrypt, rescale, rotate, Ciphertext,
    CkksParams, PublicKeySet, RotationKeys, SecretKey,
};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{LinalgError, Result};
use crate::layout::PackLayout;
use crate::operands::ServerOperands;

#[derive(Clone, Debug)]
pub struct PackedMatrix {
    pub layout: PackLayout,
    pub cts: Vec<Ciphertext>,
    pub level: usize,
    pub scale: f64,
}

/// Instrumentation for the depth/rotation contract.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub rotations_per_ct: usize,
    pub plaintext_mults_per_ct: usize,
    pub rescales_per_ct: usize,
    pub levels_consumed: usize,
}

/// Encrypt x in the replicated row-block layout.
pub fn pack_input<R: Rng + ?Sized>(
    params: &CkksParams,
    x: &Array2<f64>,
    layout: &PackLayout,
    keys: &PublicKeySet,
    rng: &mut R,
) -> Result<PackedMatrix> {
    if x.dim() != (layout.d, layout.m) {
        return Err(LinalgError::Dims(format!(
            "input has shape {:?}, layout wants ({}, {})",
            x.dim(),
            layout.d,
            layout.m
        )));
    }
    if layout.slot_count != params.slot_count() {
        return Err(LinalgError::Layout("layout slot count does not match params".into()));
    }

    let level = params.max_level();
    let scale = params.default_scale();
    let mut cts = Vec::with_capacity(layout.ct_count);
    for chunk in 0..layout.ct_count {
        let mut slots = vec![0.0f64; layout.slot_count];
        for l in 0..layout.rows_per_ct {
            let row = chunk * layout.rows_per_ct + l;
            if row >= layout.d {
                break;
            }
            for rho in 0..layout.r_pad {
                for j in 0..layout.m {
                    slots[layout.slot_of(l, rho, j)] = x[[row, j]];
                }
            }
        }
        let pt = encode(params, &slots, level, scale)?;
        cts.push(encrypt(params, &pt, keys, rng)?);
    }
    Ok(PackedMatrix { layout: layout.clone(), cts, level, scale })
}

fn apply_one(
    params: &CkksParams,
    ct: &Ciphertext,
    ops: &ServerOperands,
    qt: &plora_ckks::PlaintextOperand,
    keys: &RotationKeys,
    rotations: &mut usize,
) -> Result<Ciphertext> {
    let layout = &ops.layout;

    // stage 1: x * A1 elementwise, then inner products into replica-row heads
    let mut acc = rescale(params, &cmult_plain(params, ct, &ops.a1)?)?;
    let mut step = 1i64;
    while (step as usize) < layout.m_pad {
        let rotated = rotate(params, &acc, step, keys)?;
        acc = add(params, &acc, &rotated)?;
        *rotations += 1;
        step <<= 1;
    }

    // stage 2: keep heads only, then replicate them across each replica row
    acc = rescale(params, &cmult_plain(params, &acc, &ops.mask)?)?;
    let mut step = 1i64;
    while (step as usize) < layout.m_pad {
        let rotated = rotate(params, &acc, -step, keys)?;
        acc = add(params, &acc, &rotated)?;
        *rotations += 1;
        step <<= 1;
    }

    // stage 3: scale by A2 rows, then sum the r_pad replicas of each row
    acc = rescale(params, &cmult_plain(params, &acc, &ops.a2)?)?;
    let mut stride = layout.m_pad as i64;
    while (stride as usize) < layout.block_size() {
        let rotated = rotate(params, &acc, stride, keys)?;
        acc = add(params, &acc, &rotated)?;
        *rotations += 1;
        stride <<= 1;
    }

    // stage 4: server-side offset (result values + junk fill)
    Ok(add_plain(params, &acc, qt)?)
}

/// Run the kernel over every chunk. Requires the input at full level.
pub fn he_lora_apply(
    params: &CkksParams,
    ctx: &PackedMatrix,
    ops: &ServerOperands,
    keys: &PublicKeySet,
    parallel: bool,
) -> Result<(PackedMatrix, ApplyStats)> {
    if ctx.level != params.max_level() {
        return Err(LinalgError::Layout(format!(
            "input at level {}, kernel needs full level {}",
            ctx.level,
            params.max_level()
        )));
    }
    if ctx.cts.len() != ops.layout.ct_count || ctx.cts.len() != ops.qt.len() {
        return Err(LinalgError::Dims(format!(
            "chunk mismatch: {} ciphertexts, layout wants {}, {} offsets",
            ctx.cts.len(),
            ops.layout.ct_count,
            ops.qt.len()
        )));
    }

    let run = |(ct, qt): (&Ciphertext, &plora_ckks::PlaintextOperand)| -> Result<(Ciphertext, usize)> {
        let mut rotations = 0usize;
        let out = apply_one(params, ct, ops, qt, &keys.rotations, &mut rotations)?;
        Ok((out, rotations))
    };

    let results: Vec<(Ciphertext, usize)> = if parallel {
        ctx.cts
            .par_iter()
            .zip(ops.qt.par_iter())
            .map(run)
            .collect::<Result<Vec<_>>>()?
    } else {
        ctx.cts.iter().zip(ops.qt.iter()).map(run).collect::<Result<Vec<_>>>()?
    };

    let rotations_per_ct = results.first().map(|(_, r)| *r).unwrap_or(0);
    debug_assert!(results.iter().all(|(_, r)| *r == rotations_per_ct));
    let cts: Vec<Ciphertext> = results.into_iter().map(|(ct, _)| ct).collect();

    let out_level = cts.first().map(|c| c.level).unwrap_or(0);
    let out_scale = cts.first().map(|c| c.scale).unwrap_or(1.0);
    let stats = ApplyStats {
        rotations_per_ct,
        plaintext_mults_per_ct: 3,
        rescales_per_ct: 3,
        levels_consumed: ctx.level - out_level,
    };
    Ok((PackedMatrix { layout: ops.layout.clone(), cts, level: out_level, scale: out_scale }, stats))
}

/// Decrypt the strided result and reassemble the d x n output, discarding
/// junk slots by construction (only result positions are read).
pub fn extract_result(
    params: &CkksParams,
    result: &PackedMatrix,
    sk: &SecretKey,
) -> Result<Array2<f64>> {
    let layout = &result.layout;
    if result.cts.len() != layout.ct_count {
        return Err(LinalgError::Dims(format!(
            "result has {} chunks, layout wants {}",
            result.cts.len(),
            layout.ct_count
        )));
    }
    let mut out = Array2::zeros((layout.d, layout.n));
    for (chunk, ct) in result.cts.iter().enumerate() {
        let slots = decode(params, &decrypt(params, ct, sk)?)?;
        for l in 0..layout.rows_per_ct {
            let row = chunk * layout.rows_per_ct + l;
            if row >= layout.d {
                break;
            }
            for j in 0..layout.n {
                out[[row, j]] = slots[layout.result_slot(l, j)];
            }
        }
    }
    Ok(out)
}
