//! Server-side plaintext operands for the three kernel stages plus the final
//! offset addition.
//!
//! Each operand is encoded at the level where the kernel consumes it
//! (L, L-1, L-2, L-3) and, for the final addition, at the exact running scale
//! the three multiply/rescale stages produce.

use ndarray::Array2;
use plora_ckks::{encode, CkksParams, PlaintextOperand};
use rand::Rng;

use crate::error::{LinalgError, Result};
use crate::layout::PackLayout;

pub struct ServerOperands {
    pub layout: PackLayout,
    /// Stage 1: replica row (i, rho) carries column rho of A1. Level L.
    pub a1: PlaintextOperand,
    /// Stage 2: ones at every replica-row head. Level L-1.
    pub mask: PlaintextOperand,
    /// Stage 3: replica row (i, rho) carries row rho of A2. Level L-2.
    pub a2: PlaintextOperand,
    /// Final addition: Q_t in result slots, junk elsewhere; one per chunk. Level L-3.
    pub qt: Vec<PlaintextOperand>,
}

/// The scale a fresh-input ciphertext carries after the three
/// multiply/rescale stages, replicated f64-op-for-op from the kernel.
pub fn output_scale(params: &CkksParams) -> f64 {
    let top = params.max_level();
    let mut scale = params.default_scale();
    for stage in 0..3 {
        scale *= params.default_scale();
        scale /= params.prime(top - stage) as f64;
    }
    scale
}

pub fn build_server_operands<R: Rng + ?Sized>(
    params: &CkksParams,
    layout: &PackLayout,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    qt: &Array2<f64>,
    junk_bound: Option<f64>,
    junk_rng: &mut R,
) -> Result<ServerOperands> {
    if layout.slot_count != params.slot_count() {
        return Err(LinalgError::Layout(format!(
            "layout built for {} slots, params have {}",
            layout.slot_count,
            params.slot_count()
        )));
    }
    if a1.dim() != (layout.m, layout.r) {
        return Err(LinalgError::Dims(format!(
            "A1 has shape {:?}, layout wants ({}, {})",
            a1.dim(),
            layout.m,
            layout.r
        )));
    }
    if a2.dim() != (layout.r, layout.n) {
        return Err(LinalgError::Dims(format!(
            "A2 has shape {:?}, layout wants ({}, {})",
            a2.dim(),
            layout.r,
            layout.n
        )));
    }
    if qt.dim() != (layout.d, layout.n) {
        return Err(LinalgError::Dims(format!(
            "Q_t has shape {:?}, layout wants ({}, {})",
            qt.dim(),
            layout.d,
            layout.n
        )));
    }

    let slots = layout.slot_count;
    let top = params.max_level();
    let scale = params.default_scale();

    // A1 operand: same pattern in every row block, so one vector serves all chunks
    let mut a1_slots = vec![0.0f64; slots];
    let mut mask_slots = vec![0.0f64; slots];
    let mut a2_slots = vec![0.0f64; slots];
    for l in 0..layout.rows_per_ct {
        for rho in 0..layout.r_pad {
            mask_slots[layout.slot_of(l, rho, 0)] = 1.0;
            for j in 0..layout.m_pad {
                let slot = layout.slot_of(l, rho, j);
                if rho < layout.r && j < layout.m {
                    a1_slots[slot] = a1[[j, rho]];
                }
                if rho < layout.r && j < layout.n {
                    a2_slots[slot] = a2[[rho, j]];
                }
            }
        }
    }

    let a1_op = encode(params, &a1_slots, top, scale)?;
    let mask_op = encode(params, &mask_slots, top - 1, scale)?;
    let a2_op = encode(params, &a2_slots, top - 2, scale)?;

    let final_scale = output_scale(params);
    let mut qt_ops = Vec::with_capacity(layout.ct_count);
    for chunk in 0..layout.ct_count {
        let mut qt_slots = vec![0.0f64; slots];
        for l in 0..layout.rows_per_ct {
            let row = chunk * layout.rows_per_ct + l;
            for rho in 0..layout.r_pad {
                for j in 0..layout.m_pad {
                    let slot = layout.slot_of(l, rho, j);
                    let is_result = rho == 0 && j < layout.n && row < layout.d;
                    qt_slots[slot] = if is_result {
                        qt[[row, j]]
                    } else if let Some(bound) = junk_bound {
                        junk_rng.random_range(-bound..=bound)
                    } else {
                        0.0
                    };
                }
            }
        }
        qt_ops.push(encode(params, &qt_slots, top - 3, final_scale)?);
    }

    Ok(ServerOperands { layout: layout.clone(), a1: a1_op, mask: mask_op, a2: a2_op, qt: qt_ops })
}
