//! Model configuration.

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Query,
    Key,
    Value,
}

impl Target {
    pub fn all() -> [Target; 3] {
        [Target::Query, Target::Key, Target::Value]
    }

    pub fn tag(self) -> u8 {
        match self {
            Target::Query => 0,
            Target::Key => 1,
            Target::Value => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Target::Query),
            1 => Ok(Target::Key),
            2 => Ok(Target::Value),
            other => Err(ModelError::Checkpoint(format!("unknown target tag {other}"))),
        }
    }
}

/// How the attention deviation matrix enters the score computation.
/// Additive is the standard causal mask; the multiplicative variant zeroes
/// masked scores before the softmax instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    Additive,
    Multiplicative,
}

#[derive(Clone, Debug)]
pub struct ToyModelConfig {
    pub vocab: usize,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Attention projections that receive low-rank adapters.
    pub lora_targets: Vec<Target>,
    pub alpha: f64,
    pub rank: usize,
    pub mask_mode: MaskMode,
    pub max_seq: usize,
}

impl ToyModelConfig {
    /// Byte-level toy defaults: 2 layers, d_model 64, 4 heads, vocab 256.
    pub fn toy_default() -> Self {
        Self {
            vocab: 256,
            layers: 2,
            d_model: 64,
            heads: 4,
            lora_targets: vec![Target::Query, Target::Key, Target::Value],
            alpha: 32.0,
            rank: 8,
            mask_mode: MaskMode::Additive,
            max_seq: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.vocab == 0 || self.layers == 0 || self.d_model == 0 || self.heads == 0 {
            return Err(ModelError::Config("all dimensions must be positive".into()));
        }
        if self.rank > 0 && self.lora_targets.is_empty() {
            return Err(ModelError::Config("adapters enabled but no targets declared".into()));
        }
        if self.rank > self.d_model {
            return Err(ModelError::Config(format!(
                "rank {} exceeds d_model {}",
                self.rank, self.d_model
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ToyModelConfig::toy_default().validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut cfg = ToyModelConfig::toy_default();
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_empty_targets_with_rank() {
        let mut cfg = ToyModelConfig::toy_default();
        cfg.lora_targets.clear();
        assert!(cfg.validate().is_err());
    }
}
