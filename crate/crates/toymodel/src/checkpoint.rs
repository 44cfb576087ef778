//! Checkpoint format: magic "TOYM", config block, row-major f64 tensors.
//!
//! Adapters can be stripped on write — the model-distribution path ships the
//! public base only, while the server keeps the full fine-tuned checkpoint.

use ndarray::Array2;

use crate::adapter::{AdapterKind, LoraAdapter};
use crate::config::{MaskMode, Target, ToyModelConfig};
use crate::error::{ModelError, Result};
use crate::model::{AttentionWeights, Block, ToyModel};

pub const TOYM_MAGIC: &[u8; 4] = b"TOYM";

fn push_array(buf: &mut Vec<u8>, a: &Array2<f64>) {
    buf.extend_from_slice(&(a.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(a.ncols() as u32).to_le_bytes());
    for &v in a.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.data.len() {
            return Err(ModelError::Checkpoint("truncated checkpoint".into()));
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        if rows.saturating_mul(cols) > 1 << 26 {
            return Err(ModelError::Checkpoint("tensor too large".into()));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

pub fn model_to_bytes(model: &ToyModel, include_adapters: bool) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(TOYM_MAGIC);
    let c = &model.config;
    buf.extend_from_slice(&(c.vocab as u32).to_le_bytes());
    buf.extend_from_slice(&(c.layers as u32).to_le_bytes());
    buf.extend_from_slice(&(c.d_model as u32).to_le_bytes());
    buf.extend_from_slice(&(c.heads as u32).to_le_bytes());
    buf.extend_from_slice(&c.alpha.to_le_bytes());
    buf.extend_from_slice(&(c.rank as u32).to_le_bytes());
    buf.push(match c.mask_mode {
        MaskMode::Additive => 0,
        MaskMode::Multiplicative => 1,
    });
    buf.extend_from_slice(&(c.max_seq as u32).to_le_bytes());
    buf.push(c.lora_targets.len() as u8);
    for &t in &c.lora_targets {
        buf.push(t.tag());
    }

    push_array(&mut buf, &model.embedding);
    for block in &model.blocks {
        push_array(&mut buf, &block.attn.wq);
        push_array(&mut buf, &block.attn.wk);
        push_array(&mut buf, &block.attn.wv);
        push_array(&mut buf, &block.attn.wo);
        push_array(&mut buf, &block.w1);
        push_array(&mut buf, &block.w2);
    }
    push_array(&mut buf, &model.w_out);

    if include_adapters {
        buf.push(1);
        buf.extend_from_slice(&(model.adapters.len() as u32).to_le_bytes());
        for (&(layer, target), adapter) in &model.adapters {
            buf.extend_from_slice(&(layer as u32).to_le_bytes());
            buf.push(target.tag());
            buf.extend_from_slice(&adapter.alpha.to_le_bytes());
            buf.extend_from_slice(&(adapter.rank as u32).to_le_bytes());
            match &adapter.kind {
                AdapterKind::Plain { a1, a2 } => {
                    buf.push(0);
                    push_array(&mut buf, a1);
                    push_array(&mut buf, a2);
                }
                AdapterKind::Pll(w) => {
                    buf.push(1);
                    let blob = plora_pll::weights_to_bytes(w);
                    buf.extend_from_slice(&(blob.len() as u32).to_le_bytes());
                    buf.extend_from_slice(&blob);
                }
            }
        }
    } else {
        buf.push(0);
    }
    buf
}

pub fn model_from_bytes(data: &[u8]) -> Result<ToyModel> {
    if data.len() < 4 || &data[..4] != TOYM_MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let mut c = Cursor { data, pos: 4 };
    let vocab = c.u32()? as usize;
    let layers = c.u32()? as usize;
    let d_model = c.u32()? as usize;
    let heads = c.u32()? as usize;
    let alpha = c.f64()?;
    let rank = c.u32()? as usize;
    let mask_mode = match c.u8()? {
        0 => MaskMode::Additive,
        1 => MaskMode::Multiplicative,
        other => return Err(ModelError::Checkpoint(format!("unknown mask mode {other}"))),
    };
    let max_seq = c.u32()? as usize;
    let target_count = c.u8()? as usize;
    let mut lora_targets = Vec::with_capacity(target_count);
    for _ in 0..target_count {
        lora_targets.push(Target::from_tag(c.u8()?)?);
    }
    let config = ToyModelConfig {
        vocab,
        layers,
        d_model,
        heads,
        lora_targets,
        alpha,
        rank,
        mask_mode,
        max_seq,
    };
    config.validate()?;

    let embedding = c.array()?;
    let mut blocks = Vec::with_capacity(layers);
    for _ in 0..layers {
        blocks.push(Block {
            attn: AttentionWeights {
                wq: c.array()?,
                wk: c.array()?,
                wv: c.array()?,
                wo: c.array()?,
            },
            w1: c.array()?,
            w2: c.array()?,
        });
    }
    let w_out = c.array()?;

    let mut adapters = std::collections::BTreeMap::new();
    if c.u8()? == 1 {
        let count = c.u32()? as usize;
        if count > 1024 {
            return Err(ModelError::Checkpoint("unreasonable adapter count".into()));
        }
        for _ in 0..count {
            let layer = c.u32()? as usize;
            let target = Target::from_tag(c.u8()?)?;
            let alpha = c.f64()?;
            let rank = c.u32()? as usize;
            let kind = match c.u8()? {
                0 => AdapterKind::Plain { a1: c.array()?, a2: c.array()? },
                1 => {
                    let len = c.u32()? as usize;
                    let blob = c.take(len)?;
                    AdapterKind::Pll(plora_pll::weights_from_bytes(blob)?)
                }
                other => {
                    return Err(ModelError::Checkpoint(format!("unknown adapter kind {other}")))
                }
            };
            adapters.insert((layer, target), LoraAdapter { alpha, rank, kind });
        }
    }
    if c.pos != data.len() {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }

    Ok(ToyModel { config, embedding, blocks, w_out, adapters })
}
