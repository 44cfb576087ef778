//! Adapter training: manual reverse pass through the frozen transformer,
//! Adam on the low-rank factors (and E' when wrapped).
//!
//! The base never changes; gradients flow through it to reach the adapters.
//! Wrapped adapters train on the mod-q path with a straight-through backward,
//! exactly matching the private layer's own training rule.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;
use std::collections::BTreeMap;

use crate::adapter::AdapterKind;
use crate::config::{MaskMode, Target};
use crate::data::{ClassSample, NUM_CLASSES};
use crate::error::{ModelError, Result};
use crate::model::{ToyModel, LN_EPS};

struct LnCache {
    y: Array2<f64>,
    rstd: Array1<f64>,
}

fn ln_forward(x: &Array2<f64>) -> LnCache {
    let mut y = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / row.len() as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        row.mapv_inplace(|v| (v - mean) * r);
    }
    LnCache { y, rstd }
}

fn ln_backward(dy: &Array2<f64>, cache: &LnCache) -> Array2<f64> {
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.dim());
    for i in 0..dy.nrows() {
        let y = cache.y.row(i);
        let g = dy.row(i);
        let mean_g = g.sum() / n;
        let mean_gy = g.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        for j in 0..dy.ncols() {
            dx[[i, j]] = cache.rstd[i] * (g[j] - mean_g - y[j] * mean_gy);
        }
    }
    dx
}

struct BlockCache {
    ln1: LnCache,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ln2: LnCache,
    hidden_pre: Array2<f64>,
}

struct ForwardCache {
    blocks: Vec<BlockCache>,
    ln_f: LnCache,
    logits: Array2<f64>,
}

#[derive(Clone, Debug, Default)]
struct AdapterGrads {
    a1: Option<Array2<f64>>,
    a2: Option<Array2<f64>>,
    e_prime: Option<Array2<f64>>,
}

type GradMap = BTreeMap<(usize, Target), AdapterGrads>;

fn train_forward_cached(model: &ToyModel, tokens: &[u8]) -> Result<ForwardCache> {
    let mut h = model.embed(tokens)?;
    let mut blocks = Vec::with_capacity(model.config.layers);
    for layer in 0..model.config.layers {
        let block = &model.blocks[layer];
        let ln1 = ln_forward(&h);
        let a = &ln1.y;

        let project = |target: Target, w: &Array2<f64>| -> Result<Array2<f64>> {
            let mut out = a.dot(w);
            if let Some(adapter) = model.adapters.get(&(layer, target)) {
                out = out + adapter.bypass_train(a)?;
            }
            Ok(out)
        };
        let q = project(Target::Query, &block.attn.wq)?;
        let k = project(Target::Key, &block.attn.wk)?;
        let v = project(Target::Value, &block.attn.wv)?;

        let heads = model.config.heads;
        let dh = model.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let seq = q.nrows();
        let mut probs = Vec::with_capacity(heads);
        let mut concat = Array2::zeros((seq, model.config.d_model));
        for hd in 0..heads {
            let cols = hd * dh..(hd + 1) * dh;
            let qh = q.slice(ndarray::s![.., cols.clone()]);
            let kh = k.slice(ndarray::s![.., cols.clone()]);
            let vh = v.slice(ndarray::s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t()) * scale;
            for i in 0..seq {
                for j in (i + 1)..seq {
                    scores[[i, j]] = match model.config.mask_mode {
                        MaskMode::Additive => f64::NEG_INFINITY,
                        MaskMode::Multiplicative => 0.0,
                    };
                }
            }
            crate::model::softmax_rows(&mut scores);
            concat.slice_mut(ndarray::s![.., cols]).assign(&scores.dot(&vh));
            probs.push(scores);
        }
        let attn = concat.dot(&block.attn.wo);
        let h_mid = &h + &attn;

        let ln2 = ln_forward(&h_mid);
        let hidden_pre = ln2.y.dot(&block.w1);
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let mlp = hidden.dot(&block.w2);
        h = &h_mid + &mlp;

        blocks.push(BlockCache { ln1, q, k, v, probs, ln2, hidden_pre });
    }
    let ln_f = ln_forward(&h);
    let logits = ln_f.y.dot(&model.w_out);
    Ok(ForwardCache { blocks, ln_f, logits })
}

/// Cross-entropy over the class logits at the last position; returns the loss
/// and d(loss)/d(logits).
fn class_loss(logits: &Array2<f64>, label: usize) -> (f64, Array2<f64>) {
    let last = logits.nrows() - 1;
    let mut z: Vec<f64> = (0..NUM_CLASSES).map(|j| logits[[last, j]]).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in z.iter_mut() {
        *v = (*v - max).exp();
    }
    let sum: f64 = z.iter().sum();
    let p: Vec<f64> = z.iter().map(|v| v / sum).collect();
    let loss = -p[label].max(1e-300).ln();

    let mut dlogits = Array2::zeros(logits.dim());
    for j in 0..NUM_CLASSES {
        dlogits[[last, j]] = p[j] - if j == label { 1.0 } else { 0.0 };
    }
    (loss, dlogits)
}

fn backward(
    model: &ToyModel,
    cache: &ForwardCache,
    dlogits: &Array2<f64>,
    grads: &mut GradMap,
) {
    let heads = model.config.heads;
    let dh_dim = model.config.head_dim();
    let scale = 1.0 / (dh_dim as f64).sqrt();

    let dhf = dlogits.dot(&model.w_out.t());
    let mut dh = ln_backward(&dhf, &cache.ln_f);

    for layer in (0..model.config.layers).rev() {
        let block = &model.blocks[layer];
        let bc = &cache.blocks[layer];

        // h_out = h_mid + relu(ln2(h_mid) W1) W2
        let mut dh_mid = dh.clone();
        let mut dhidden = dh.dot(&block.w2.t());
        dhidden.zip_mut_with(&bc.hidden_pre, |g, &pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
        let db = dhidden.dot(&block.w1.t());
        dh_mid = dh_mid + ln_backward(&db, &bc.ln2);

        // h_mid = h_in + concat Wo
        let mut dh_in = dh_mid.clone();
        let dconcat = dh_mid.dot(&block.attn.wo.t());

        let seq = bc.q.nrows();
        let mut dq = Array2::zeros(bc.q.dim());
        let mut dk = Array2::zeros(bc.k.dim());
        let mut dv = Array2::zeros(bc.v.dim());
        for hd in 0..heads {
            let cols = hd * dh_dim..(hd + 1) * dh_dim;
            let p = &bc.probs[hd];
            let do_h = dconcat.slice(ndarray::s![.., cols.clone()]);
            let vh = bc.v.slice(ndarray::s![.., cols.clone()]);
            let qh = bc.q.slice(ndarray::s![.., cols.clone()]);
            let kh = bc.k.slice(ndarray::s![.., cols.clone()]);

            let dp = do_h.dot(&vh.t());
            let dvh = p.t().dot(&do_h);
            // softmax backward, rowwise
            let mut ds = Array2::zeros((seq, seq));
            for i in 0..seq {
                let dot: f64 = (0..seq).map(|j| dp[[i, j]] * p[[i, j]]).sum();
                for j in 0..seq {
                    ds[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
                }
            }
            // masked positions carry no score gradient in either mask mode
            for i in 0..seq {
                for j in (i + 1)..seq {
                    ds[[i, j]] = 0.0;
                }
            }
            let dqh = ds.dot(&kh) * scale;
            let dkh = ds.t().dot(&qh) * scale;
            dq.slice_mut(ndarray::s![.., cols.clone()]).assign(&dqh);
            dk.slice_mut(ndarray::s![.., cols.clone()]).assign(&dkh);
            dv.slice_mut(ndarray::s![.., cols]).assign(&dvh);
        }

        // projections q = a Wq + bypass(a), same for k, v
        let a = &bc.ln1.y;
        let mut da: Array2<f64> = Array2::zeros(a.dim());
        for (target, w, dt) in [
            (Target::Query, &block.attn.wq, &dq),
            (Target::Key, &block.attn.wk, &dk),
            (Target::Value, &block.attn.wv, &dv),
        ] {
            da = da + dt.dot(&w.t());
            if let Some(adapter) = model.adapters.get(&(layer, target)) {
                let scale_b = adapter.scaling();
                let entry = grads.entry((layer, target)).or_default();
                match &adapter.kind {
                    AdapterKind::Plain { a1, a2 } => {
                        let dz = dt * scale_b;
                        da = da + dz.dot(&a2.t()).dot(&a1.t());
                        let at_dz = a.t().dot(&dz);
                        accumulate(&mut entry.a1, at_dz.dot(&a2.t()));
                        accumulate(&mut entry.a2, a1.t().dot(&at_dz));
                    }
                    AdapterKind::Pll(w_pll) => {
                        let (a1, a2) = match &w_pll.matrix {
                            plora_pll::PllMatrix::Factored { a1, a2 } => (a1, a2),
                            plora_pll::PllMatrix::Dense(_) => unreachable!(),
                        };
                        // straight-through across the centered mod
                        let dz = dt * scale_b;
                        da = da + dz.dot(&a2.t()).dot(&a1.t());
                        let shifted = a + &w_pll.shift_rows(a.nrows()).expect("shift rows");
                        let st_dz = shifted.t().dot(&dz);
                        accumulate(&mut entry.a1, st_dz.dot(&a2.t()));
                        accumulate(&mut entry.a2, a1.t().dot(&st_dz));
                        let cols_sum = Array2::from_shape_fn((1, dz.ncols()), |(_, j)| {
                            dz.column(j).sum()
                        });
                        let ep = Array2::from_shape_fn(w_pll.e_prime.dim(), |(_, j)| {
                            cols_sum[[0, j]]
                        });
                        accumulate(&mut entry.e_prime, ep);
                    }
                }
            }
        }
        dh_in = dh_in + ln_backward(&da, &bc.ln1);
        dh = dh_in;
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc = &*acc + &g,
        None => *slot = Some(g),
    }
}

// ── Adam ─────────────────────────────────────────────────────────────────

struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Decoupled weight decay; keeps wrapped-adapter norms from riding the
    /// hidden-shift channel into mod-wrap territory.
    weight_decay: f64,
    step: usize,
    state: BTreeMap<(usize, Target, u8), AdamState>,
}

impl Adam {
    fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, state: BTreeMap::new() }
    }

    fn update(&mut self, key: (usize, Target, u8), param: &mut Array2<f64>, grad: &Array2<f64>) {
        let st = self.state.entry(key).or_insert_with(|| AdamState {
            m: Array2::zeros(grad.dim()),
            v: Array2::zeros(grad.dim()),
        });
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        if self.weight_decay > 0.0 {
            let shrink = 1.0 - self.lr * self.weight_decay;
            param.mapv_inplace(|p| p * shrink);
        }
        ndarray::Zip::from(param)
            .and(&mut st.m)
            .and(&mut st.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            });
    }
}

// ── trainer ──────────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 300, batch: 16, lr: 2e-3, weight_decay: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Train the adapters (base frozen) on the classification task.
pub fn train_toy_lora(
    model: &mut ToyModel,
    dataset: &[ClassSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(ModelError::Config("empty dataset".into()));
    }
    if model.adapters.is_empty() {
        return Err(ModelError::Config("no adapters to train".into()));
    }
    let mut opt = Adam::new(cfg.lr, cfg.weight_decay);
    let mut order_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);

    for _step in 0..cfg.steps {
        let mut grads = GradMap::new();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch {
            let sample = &dataset[order_rng.random_range(0..dataset.len())];
            let cache = train_forward_cached(model, &sample.tokens)?;
            let (loss, dlogits) = class_loss(&cache.logits, sample.label);
            if !loss.is_finite() {
                return Err(ModelError::Diverged);
            }
            batch_loss += loss;
            backward(model, &cache, &dlogits, &mut grads);
        }
        batch_loss /= cfg.batch as f64;
        losses.push(batch_loss);

        opt.step += 1;
        let inv = 1.0 / cfg.batch as f64;
        for (key, g) in grads {
            let adapter = model.adapters.get_mut(&key).expect("gradient for missing adapter");
            match &mut adapter.kind {
                AdapterKind::Plain { a1, a2 } => {
                    if let Some(g1) = g.a1 {
                        opt.update((key.0, key.1, 0), a1, &(g1 * inv));
                    }
                    if let Some(g2) = g.a2 {
                        opt.update((key.0, key.1, 1), a2, &(g2 * inv));
                    }
                }
                AdapterKind::Pll(w) => {
                    if let plora_pll::PllMatrix::Factored { a1, a2 } = &mut w.matrix {
                        if let Some(g1) = g.a1 {
                            opt.update((key.0, key.1, 0), a1, &(g1 * inv));
                        }
                        if let Some(g2) = g.a2 {
                            opt.update((key.0, key.1, 1), a2, &(g2 * inv));
                        }
                    }
                    if let Some(ge) = g.e_prime {
                        opt.update((key.0, key.1, 2), &mut w.e_prime, &(ge * inv));
                    }
                }
            }
        }
    }

    let initial_loss = losses.first().copied().unwrap_or(0.0);
    let final_loss = losses.last().copied().unwrap_or(0.0);
    Ok(TrainReport { losses, initial_loss, final_loss })
}

/// Classification accuracy; wrapped adapters draw fresh round randomness per
/// sample from the given RNG.
pub fn accuracy<R: Rng + ?Sized>(
    model: &ToyModel,
    dataset: &[ClassSample],
    rng: &mut R,
) -> Result<f64> {
    let mut correct = 0usize;
    for sample in dataset {
        let rounds = model.sample_rounds(sample.tokens.len(), rng)?;
        let rounds_opt = if rounds.is_empty() { None } else { Some(&rounds) };
        let logits = model.forward(&sample.tokens, rounds_opt)?;
        let class = model.class_logits(&logits, NUM_CLASSES);
        let pred = class
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
