//! Benchmark harness over the split-inference protocol.
//!
//! Token sweeps measure the full client call (pack, encrypt, round trip,
//! decrypt, demodulate) against a reachable server; rank sweeps re-deploy a
//! fresh local server per rank, since the adapter rank is baked into the
//! server's weights. Raw samples are kept; summaries derive medians.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use plora_ckks::CkksParams;
use plora_protocol::{connect, serve_local, ServerConfig, ServerHandle};
use plora_toymodel::{AdapterKind, Target, ToyModel, ToyModelConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub run_id: String,
    pub tokens: usize,
    pub rank: usize,
    pub trial: usize,
    pub wall_ms: f64,
    pub per_token_ms: f64,
    pub parallel_mode: bool,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub config: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Median per-token time grouped by the given key extractor.
    pub fn median_by<K: Ord + Copy>(&self, key: impl Fn(&BenchRow) -> K) -> Vec<(K, f64)> {
        let mut groups: std::collections::BTreeMap<K, Vec<f64>> = Default::default();
        for row in &self.rows {
            groups.entry(key(row)).or_default().push(row.per_token_ms);
        }
        groups
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (k, v[v.len() / 2])
            })
            .collect()
    }
}

/// Least-squares line fit; returns (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// Measure the full adapter call for each batch size in `token_counts`.
/// `trials == 0` produces an empty report without contacting the server.
pub fn run_token_bench(
    addr: &str,
    token_counts: &[usize],
    rank_echo: usize,
    trials: usize,
    seed: u64,
    parallel_mode: bool,
) -> Result<BenchReport> {
    let config = format!(
        "token_bench addr={addr} tokens={token_counts:?} rank={rank_echo} trials={trials}"
    );
    let mut report = BenchReport { config, rows: Vec::new() };
    if trials == 0 {
        return Ok(report);
    }

    let mut session =
        connect(addr, None, seed).with_context(|| format!("connecting to {addr}"))?;
    let m = session.model.config.d_model;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xBEEF);

    // untimed warm-up: first-call page faults and allocator growth would
    // otherwise leak into the smallest batch
    let warmup = Array2::from_shape_fn((1, m), |_| rng.random_range(-1.0..1.0));
    let _ = session.lora_call(&warmup).context("warm-up call failed")?;

    for &tokens in token_counts {
        for trial in 0..trials {
            let x = Array2::from_shape_fn((tokens, m), |_| rng.random_range(-1.0..1.0));
            let start = Instant::now();
            let _ = session.lora_call(&x).context("adapter call failed")?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            report.rows.push(BenchRow {
                run_id: format!("tokens-{tokens}"),
                tokens,
                rank: rank_echo,
                trial,
                wall_ms,
                per_token_ms: wall_ms / tokens as f64,
                parallel_mode,
            });
        }
    }
    Ok(report)
}

/// Build a deployable single-adapter model with the given rank.
pub fn deployable_model(rank: usize, q: f64, seed: u64) -> Result<ToyModel> {
    let mut cfg = ToyModelConfig::toy_default();
    cfg.rank = rank;
    cfg.lora_targets = vec![Target::Query];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut model = ToyModel::init(&cfg, &mut rng)?;
    model.attach_plain_adapters(&mut rng);
    // deployable checkpoints externalize exactly one adapter
    model.adapters.retain(|k, _| *k == (0, Target::Query));
    let gamma = 1.5 * (cfg.d_model as f64).sqrt();
    model.wrap_adapters_with_pll(q, Some(gamma), &mut rng)?;
    for adapter in model.adapters.values_mut() {
        if let AdapterKind::Pll(w) = &mut adapter.kind {
            if let plora_pll::PllMatrix::Factored { a2, .. } = &mut w.matrix {
                a2.mapv_inplace(|_| rng.random_range(-0.05..0.05));
            }
        }
    }
    Ok(model)
}

/// Spawn a local server for the given rank (the rank lives in the server's
/// weights, so a rank sweep re-deploys per point).
pub fn spawn_local_server(
    params: Arc<CkksParams>,
    rank: usize,
    parallel: bool,
    seed: u64,
) -> Result<ServerHandle> {
    let model = deployable_model(rank, 8.0, seed)?;
    let handle = serve_local(params, model, ServerConfig { parallel, record_rounds: false, seed })?;
    Ok(handle)
}

/// Sweep adapter ranks at a fixed batch size against per-rank local servers.
pub fn run_rank_bench(
    params: Arc<CkksParams>,
    ranks: &[usize],
    token_count: usize,
    trials: usize,
    seed: u64,
    parallel: bool,
) -> Result<BenchReport> {
    let config = format!(
        "rank_bench ranks={ranks:?} tokens={token_count} trials={trials} parallel={parallel}"
    );
    let mut report = BenchReport { config, rows: Vec::new() };
    if trials == 0 {
        return Ok(report);
    }
    for &rank in ranks {
        if rank == 0 {
            bail!("rank must be positive");
        }
        let handle = spawn_local_server(params.clone(), rank, parallel, seed)?;
        let addr = handle.addr.to_string();
        let sub = run_token_bench(&addr, &[token_count], rank, trials, seed ^ rank as u64, parallel)?;
        for mut row in sub.rows {
            row.run_id = format!("rank-{rank}");
            row.rank = rank;
            report.rows.push(row);
        }
        handle.shutdown();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_no_server_contact() {
        // an unroutable address proves no connection is attempted
        let report = run_token_bench("127.0.0.1:1", &[10, 20], 8, 0, 0, false).unwrap();
        assert!(report.rows.is_empty());
    }

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_groups_rows() {
        let mk = |tokens: usize, pt: f64| BenchRow {
            run_id: "t".into(),
            tokens,
            rank: 8,
            trial: 0,
            wall_ms: pt * tokens as f64,
            per_token_ms: pt,
            parallel_mode: false,
        };
        let report = BenchReport {
            config: String::new(),
            rows: vec![mk(10, 3.0), mk(10, 1.0), mk(10, 2.0), mk(20, 5.0)],
        };
        let med = report.median_by(|r| r.tokens);
        assert_eq!(med, vec![(10, 2.0), (20, 5.0)]);
    }
}
