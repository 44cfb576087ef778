//! The desk-scale decoder: byte embedding, pre-norm attention blocks with
//! frozen MLPs, and a resumable split forward pass.
//!
//! The monolithic forward is literally "pause at the split, compute the
//! bypass locally, resume", so split and unsplit execution share every
//! floating-point operation and agree bitwise.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

use crate::adapter::{AdapterKind, LoraAdapter};
use crate::config::{MaskMode, Target, ToyModelConfig};
use crate::error::{ModelError, Result};
use plora_pll::{sample_round, PllRound};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub attn: AttentionWeights,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ToyModel {
    pub config: ToyModelConfig,
    pub embedding: Array2<f64>,
    pub blocks: Vec<Block>,
    pub w_out: Array2<f64>,
    /// Adapters keyed by (layer, target). Frozen base weights live in blocks.
    pub adapters: BTreeMap<(usize, Target), LoraAdapter>,
}

/// Where the split pass pauses: immediately before the adapted projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitPoint {
    pub layer: usize,
    pub target: Target,
}

/// Per-adapter round randomness for one forward pass.
pub type RoundMap = BTreeMap<(usize, Target), PllRound>;

/// Everything pinf2 needs to resume: the residual stream entering the split
/// layer and the normed activation that feeds the adapted projection.
#[derive(Clone, Debug)]
pub struct SplitState {
    pub split: SplitPoint,
    residual: Array2<f64>,
    pub x_l: Array2<f64>,
    seq_len: usize,
}

pub fn layer_norm(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * rstd);
    }
    out
}

pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Multi-head attention over already-projected q/k/v with a causal mask.
pub(crate) fn attention_heads(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    heads: usize,
    mask_mode: MaskMode,
) -> Array2<f64> {
    let (seq, d_model) = q.dim();
    let dh = d_model / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((seq, d_model));
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = q.slice(ndarray::s![.., cols.clone()]);
        let kh = k.slice(ndarray::s![.., cols.clone()]);
        let vh = v.slice(ndarray::s![.., cols.clone()]);
        let mut scores = qh.dot(&kh.t()) * scale;
        match mask_mode {
            MaskMode::Additive => {
                for i in 0..seq {
                    for j in (i + 1)..seq {
                        scores[[i, j]] = f64::NEG_INFINITY;
                    }
                }
            }
            MaskMode::Multiplicative => {
                for i in 0..seq {
                    for j in (i + 1)..seq {
                        scores[[i, j]] = 0.0;
                    }
                }
            }
        }
        softmax_rows(&mut scores);
        let oh = scores.dot(&vh);
        out.slice_mut(ndarray::s![.., cols]).assign(&oh);
    }
    out
}

/// Standalone self-attention: project X through the weights, apply the masked
/// softmax and recombine heads.
pub fn self_attention_forward(
    x: &Array2<f64>,
    weights: &AttentionWeights,
    heads: usize,
    mask_mode: MaskMode,
) -> Result<Array2<f64>> {
    if x.ncols() != weights.wq.nrows() {
        return Err(ModelError::Shape(format!(
            "input width {} vs projection rows {}",
            x.ncols(),
            weights.wq.nrows()
        )));
    }
    let q = x.dot(&weights.wq);
    let k = x.dot(&weights.wk);
    let v = x.dot(&weights.wv);
    Ok(attention_heads(&q, &k, &v, heads, mask_mode).dot(&weights.wo))
}

fn sinusoidal_positions(max_seq: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_seq, d_model), |(p, i)| {
        let pair = (i / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl ToyModel {
    /// Random frozen base; adapters are attached separately.
    pub fn init<R: Rng + ?Sized>(config: &ToyModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let w_init = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        let e_init = Normal::new(0.0, 0.5).unwrap();
        let matrix =
            |rows: usize, cols: usize, dist: &Normal<f64>, rng: &mut R| -> Array2<f64> {
                Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
            };

        let embedding = matrix(config.vocab, d, &e_init, rng);
        let blocks = (0..config.layers)
            .map(|_| Block {
                attn: AttentionWeights {
                    wq: matrix(d, d, &w_init, rng),
                    wk: matrix(d, d, &w_init, rng),
                    wv: matrix(d, d, &w_init, rng),
                    wo: matrix(d, d, &w_init, rng),
                },
                w1: matrix(d, 4 * d, &w_init, rng),
                w2: matrix(4 * d, d, &w_init, rng),
            })
            .collect();
        let w_out = matrix(d, config.vocab, &w_init, rng);
        Ok(Self { config: config.clone(), embedding, blocks, w_out, adapters: BTreeMap::new() })
    }

    /// Attach fresh plain adapters at every configured target.
    pub fn attach_plain_adapters<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let d = self.config.d_model;
        let r = self.config.rank;
        let a1_init = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        for layer in 0..self.config.layers {
            for &target in &self.config.lora_targets {
                let a1 = Array2::from_shape_fn((d, r), |_| a1_init.sample(rng));
                let a2 = Array2::zeros((r, d));
                self.adapters.insert(
                    (layer, target),
                    LoraAdapter {
                        alpha: self.config.alpha,
                        rank: r,
                        kind: AdapterKind::Plain { a1, a2 },
                    },
                );
            }
        }
    }

    /// Wrap every adapter in a private layer with the given modulus.
    ///
    /// `gamma = None` keeps the reduction-regime default gamma = 2 sqrt(m) q.
    /// That regime fixes the hidden-shift norm so high that a trainable-scale
    /// weight matrix either wraps the signal past q or forces E' entries
    /// whose inference-time dropout swamps the logits, so task trainers
    /// usually pass the weaker-regime gamma the validation warning describes.
    pub fn wrap_adapters_with_pll<R: Rng + ?Sized>(
        &mut self,
        q: f64,
        gamma: Option<f64>,
        rng: &mut R,
    ) -> Result<Vec<String>> {
        let d = self.config.d_model;
        let mut warnings = Vec::new();
        let keys: Vec<(usize, Target)> = self.adapters.keys().cloned().collect();
        for key in keys {
            let adapter = self.adapters.get(&key).unwrap();
            let (a1, _) = adapter.factors();
            let mut cfg = plora_pll::PllConfig::with_default_gamma(
                d,
                d,
                self.config.rank.max(4),
                q,
                self.config.rank,
            );
            if let Some(g) = gamma {
                cfg.gamma = g;
            }
            cfg.p_bern = plora_pll::DEFAULT_P_BERN;
            warnings.extend(cfg.validate()?);
            let mut w = plora_pll::pll_init(&cfg, rng)?;
            // keep the already-initialized A1 so plain and wrapped runs start
            // from comparable weights
            if let plora_pll::PllMatrix::Factored { a1: slot, .. } = &mut w.matrix {
                slot.assign(a1);
            }
            let alpha = adapter.alpha;
            let rank = adapter.rank;
            self.adapters
                .insert(key, LoraAdapter { alpha, rank, kind: AdapterKind::Pll(w) });
        }
        warnings.dedup();
        Ok(warnings)
    }

    pub fn positions(&self) -> Array2<f64> {
        sinusoidal_positions(self.config.max_seq, self.config.d_model)
    }

    pub fn embed(&self, tokens: &[u8]) -> Result<Array2<f64>> {
        if tokens.is_empty() {
            return Err(ModelError::Shape("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_seq {
            return Err(ModelError::Shape(format!(
                "sequence length {} exceeds max {}",
                tokens.len(),
                self.config.max_seq
            )));
        }
        let pos = self.positions();
        let mut h = Array2::zeros((tokens.len(), self.config.d_model));
        for (i, &t) in tokens.iter().enumerate() {
            for j in 0..self.config.d_model {
                h[[i, j]] = self.embedding[[t as usize, j]] + pos[[i, j]];
            }
        }
        Ok(h)
    }

    /// Sample fresh round randomness for every wrapped adapter.
    pub fn sample_rounds<R: Rng + ?Sized>(&self, seq_len: usize, rng: &mut R) -> Result<RoundMap> {
        let mut rounds = RoundMap::new();
        for (key, adapter) in &self.adapters {
            if let AdapterKind::Pll(w) = &adapter.kind {
                rounds.insert(*key, sample_round(w, seq_len, rng)?);
            }
        }
        Ok(rounds)
    }

    fn bypass_for(
        &self,
        key: (usize, Target),
        x: &Array2<f64>,
        rounds: Option<&RoundMap>,
    ) -> Result<Option<Array2<f64>>> {
        match self.adapters.get(&key) {
            None => Ok(None),
            Some(adapter) => {
                let round = rounds.and_then(|r| r.get(&key));
                Ok(Some(adapter.bypass(x, round)?))
            }
        }
    }

    /// Run from the embedding up to the split point. Returns the activation
    /// x_L entering the adapted projection plus the state pinf2 resumes from.
    pub fn pinf1(
        &self,
        tokens: &[u8],
        split: SplitPoint,
        rounds: Option<&RoundMap>,
    ) -> Result<(Array2<f64>, SplitState)> {
        if split.layer >= self.config.layers {
            return Err(ModelError::Split(format!(
                "layer {} out of range ({} layers)",
                split.layer, self.config.layers
            )));
        }
        // No adapter check here: the whole point of splitting is that the
        // local model may not hold the weights behind the bypass.
        let mut h = self.embed(tokens)?;
        for layer in 0..split.layer {
            h = self.run_block(layer, h, rounds, None)?;
        }
        let x_l = layer_norm(&h);
        let state =
            SplitState { split, residual: h, x_l: x_l.clone(), seq_len: tokens.len() };
        Ok((x_l, state))
    }

    /// Resume with the externally computed bypass for the split target and
    /// finish the forward pass.
    pub fn pinf2(
        &self,
        state: &SplitState,
        bypass: &Array2<f64>,
        rounds: Option<&RoundMap>,
    ) -> Result<Array2<f64>> {
        if bypass.dim() != (state.seq_len, self.config.d_model) {
            return Err(ModelError::Shape(format!(
                "bypass has shape {:?}, expected ({}, {})",
                bypass.dim(),
                state.seq_len,
                self.config.d_model
            )));
        }
        let mut h = self.run_block_from_state(state, bypass, rounds)?;
        for layer in state.split.layer + 1..self.config.layers {
            h = self.run_block(layer, h, rounds, None)?;
        }
        let hf = layer_norm(&h);
        Ok(hf.dot(&self.w_out))
    }

    /// Monolithic forward: pause at the first adapter (or run straight
    /// through when no adapters exist), computing bypasses locally.
    pub fn forward(&self, tokens: &[u8], rounds: Option<&RoundMap>) -> Result<Array2<f64>> {
        if let Some((&(layer, target), _)) = self.adapters.iter().next() {
            let split = SplitPoint { layer, target };
            let (x_l, state) = self.pinf1(tokens, split, rounds)?;
            let adapter = &self.adapters[&(layer, target)];
            let round = rounds.and_then(|r| r.get(&(layer, target)));
            let bypass = adapter.bypass(&x_l, round)?;
            self.pinf2(&state, &bypass, rounds)
        } else {
            let mut h = self.embed(tokens)?;
            for layer in 0..self.config.layers {
                h = self.run_block(layer, h, rounds, None)?;
            }
            let hf = layer_norm(&h);
            Ok(hf.dot(&self.w_out))
        }
    }

    /// One attention+MLP block; `external` optionally supplies the bypass for
    /// one target (the split path).
    fn run_block(
        &self,
        layer: usize,
        h: Array2<f64>,
        rounds: Option<&RoundMap>,
        external: Option<(Target, &Array2<f64>, &Array2<f64>)>,
    ) -> Result<Array2<f64>> {
        let block = &self.blocks[layer];
        let (a, h) = match external {
            Some((_, a, _)) => ((*a).clone(), h),
            None => (layer_norm(&h), h),
        };

        let proj = |target: Target, w: &Array2<f64>| -> Result<Array2<f64>> {
            let mut out = a.dot(w);
            if let Some((ext_target, _, bypass)) = external {
                if ext_target == target {
                    out = out + bypass;
                    return Ok(out);
                }
            }
            if let Some(b) = self.bypass_for((layer, target), &a, rounds)? {
                out = out + b;
            }
            Ok(out)
        };

        let q = proj(Target::Query, &block.attn.wq)?;
        let k = proj(Target::Key, &block.attn.wk)?;
        let v = proj(Target::Value, &block.attn.wv)?;

        let attn =
            attention_heads(&q, &k, &v, self.config.heads, self.config.mask_mode).dot(&block.attn.wo);
        let h_mid = &h + &attn;

        let b = layer_norm(&h_mid);
        let hidden = b.dot(&block.w1).mapv(|v| v.max(0.0));
        let mlp = hidden.dot(&block.w2);
        Ok(&h_mid + &mlp)
    }

    fn run_block_from_state(
        &self,
        state: &SplitState,
        bypass: &Array2<f64>,
        rounds: Option<&RoundMap>,
    ) -> Result<Array2<f64>> {
        self.run_block(
            state.split.layer,
            state.residual.clone(),
            rounds,
            Some((state.split.target, &state.x_l, bypass)),
        )
    }

    /// Classification logits: the first `classes` vocabulary entries at the
    /// final position.
    pub fn class_logits(&self, logits: &Array2<f64>, classes: usize) -> Array1<f64> {
        let last = logits.nrows() - 1;
        Array1::from_iter((0..classes).map(|j| logits[[last, j]]))
    }
}
