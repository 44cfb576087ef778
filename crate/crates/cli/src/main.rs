//! `plora` — command-line front end for the split-inference workspace:
//! key generation, the adapter server, split-inference clients, toy adapter
//! training, extraction experiments, and the benchmark harness.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use plora_attack_lab::{extract_plain_linear, extraction_residuals, pll_demod_oracle};
use plora_ckks::{keygen, wire, CkksParams};
use plora_cli::bench::{linear_fit, run_rank_bench, run_token_bench, spawn_local_server};
use plora_cli::csvio::{read_csv, write_csv};
use plora_cli::reference::*;
use plora_he_linalg::PackLayout;
use plora_pll::PllConfig;
use plora_protocol::{connect, serve, ServerConfig};
use plora_toymodel::*;

#[derive(Parser)]
#[command(name = "plora", about = "Split inference with encrypted private adapters", version)]
struct Cli {
    /// RNG seed (falls back to PLORA_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate CKKS parameters and client key material.
    Keygen {
        /// Ring degree.
        #[arg(long, default_value_t = 8192)]
        n: usize,
        /// Output directory for params.ckl / secret.ckl / public.ckl.
        #[arg(long)]
        out: PathBuf,
        /// Input width the rotation step set must cover.
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Adapter rank the rotation step set must cover.
        #[arg(long, default_value_t = 8)]
        r: usize,
    },
    /// Serve a fine-tuned checkpoint over the split protocol.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7777")]
        listen: String,
        /// Checkpoint with exactly one wrapped adapter.
        #[arg(long)]
        weights: PathBuf,
        /// Serialized parameter file; defaults to the built-in N=8192 set.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Fan kernel chunks across threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Run split inference against a server, one prompt per line.
    Infer {
        #[arg(long)]
        server: String,
        /// Text file of prompts (byte-level tokens).
        #[arg(long)]
        prompts: PathBuf,
        /// Optionally save the received public base checkpoint.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Train toy adapters on the synthetic classification task.
    TrainToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 2e-3)]
        lr: f64,
        /// Wrap adapters in the private layer.
        #[arg(long)]
        pll: bool,
        /// Private-layer modulus (with --pll).
        #[arg(long, default_value_t = 8.0)]
        q: f64,
        /// Hidden-shift norm; defaults to the trainable weak-regime value.
        #[arg(long)]
        gamma: Option<f64>,
        /// Adapter targets, e.g. "q" or "q,k,v".
        #[arg(long, default_value = "q,k,v")]
        targets: String,
        #[arg(long, default_value_t = 8)]
        rank: usize,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        /// Keep a single externalizable adapter (layer 0, first target), the
        /// shape the serve command requires.
        #[arg(long)]
        deploy: bool,
    },
    /// Token-count sweep of the encrypted adapter call.
    BenchTokens {
        /// Server address; spawns a local one when omitted.
        #[arg(long)]
        server: Option<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200, 500, 700, 1000])]
        tokens: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        rank: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        parallel: bool,
        /// Ring degree for the self-hosted server.
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapter-rank sweep at a fixed batch size (self-hosted servers).
    BenchRank {
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 24, 48])]
        ranks: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        tokens: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        parallel: bool,
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extraction experiments: exact recovery on plain layers, residual
    /// statistics against the private layer.
    Attack {
        /// "plain" or "pll".
        #[arg(long, default_value = "plain")]
        mode: String,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        /// Emit one CSV line instead of prose.
        #[arg(long)]
        csv: bool,
    },
    /// Render a benchmark CSV, optionally alongside published reference data.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// "paper" adds the published reference rows.
        #[arg(long)]
        against: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let seed = cli
        .seed
        .or_else(|| std::env::var("PLORA_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    if let Err(e) = run(cli.command, seed) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::Keygen { n, out, m, r } => cmd_keygen(n, &out, m, r, seed),
        Command::Serve { listen, weights, params, parallel } => {
            cmd_serve(&listen, &weights, params.as_deref(), parallel, seed)
        }
        Command::Infer { server, prompts, save_model } => {
            cmd_infer(&server, &prompts, save_model.as_deref(), seed)
        }
        Command::TrainToy { out, steps, batch, lr, pll, q, gamma, targets, rank, samples, deploy } => {
            cmd_train_toy(&out, steps, batch, lr, pll, q, gamma, &targets, rank, samples, deploy, seed)
        }
        Command::BenchTokens { server, tokens, rank, trials, parallel, n, out } => {
            cmd_bench_tokens(server.as_deref(), &tokens, rank, trials, parallel, n, out.as_deref(), seed)
        }
        Command::BenchRank { ranks, tokens, trials, parallel, n, out } => {
            cmd_bench_rank(&ranks, tokens, trials, parallel, n, out.as_deref(), seed)
        }
        Command::Attack { mode, n, trials, q, csv } => cmd_attack(&mode, n, trials, q, csv, seed),
        Command::Report { input, against } => cmd_report(&input, against.as_deref()),
    }
}

fn build_params(n: usize) -> Result<CkksParams> {
    if n == plora_ckks::DEFAULT_RING_DEGREE {
        Ok(CkksParams::recommended())
    } else {
        Ok(CkksParams::new(n, &plora_ckks::DEFAULT_CHAIN_BITS, plora_ckks::DEFAULT_SCALE_BITS)?)
    }
}

fn load_params(path: Option<&std::path::Path>) -> Result<CkksParams> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {p:?}"))?;
            Ok(wire::params_from_bytes(&bytes)?)
        }
        None => Ok(CkksParams::recommended()),
    }
}

fn hex8(fp: &[u8; 32]) -> String {
    fp.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn cmd_keygen(n: usize, out: &std::path::Path, m: usize, r: usize, seed: u64) -> Result<()> {
    let params = build_params(n)?;
    let width = m.next_power_of_two().min(params.slot_count());
    let layout = PackLayout::new(1, m, r, width, params.slot_count())?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let km = keygen(&params, &layout.required_steps(), &mut rng)?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("params.ckl"), wire::params_to_bytes(&params))?;
    std::fs::write(out.join("secret.ckl"), wire::secret_key_to_bytes(&params, &km.secret))?;
    std::fs::write(out.join("public.ckl"), wire::public_keys_to_bytes(&params, &km.public))?;
    println!(
        "wrote params.ckl, secret.ckl, public.ckl to {} (N={n}, {} rotation steps, key fp {})",
        out.display(),
        layout.required_steps().len(),
        hex8(&km.public.fingerprint)
    );
    Ok(())
}

fn cmd_serve(
    listen: &str,
    weights: &std::path::Path,
    params_path: Option<&std::path::Path>,
    parallel: bool,
    seed: u64,
) -> Result<()> {
    let params = Arc::new(load_params(params_path)?);
    let bytes = std::fs::read(weights).with_context(|| format!("reading {weights:?}"))?;
    let model = model_from_bytes(&bytes)?;
    let listener =
        std::net::TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    let handle = serve(
        listener,
        params,
        model,
        ServerConfig { parallel, record_rounds: false, seed },
    )?;
    println!("serving on {} (parallel={parallel})", handle.addr);
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn cmd_infer(
    server: &str,
    prompts: &std::path::Path,
    save_model: Option<&std::path::Path>,
    seed: u64,
) -> Result<()> {
    let text = std::fs::read_to_string(prompts).with_context(|| format!("reading {prompts:?}"))?;
    let mut session = connect(server, None, seed)?;
    if let Some(path) = save_model {
        std::fs::write(path, model_to_bytes(&session.model, false))?;
        println!("saved public base checkpoint to {}", path.display());
    }
    let max_seq = session.model.config.max_seq;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let tokens: Vec<u8> = line.bytes().take(max_seq).collect();
        let logits = session.infer(&tokens)?;
        let class = session.model.class_logits(&logits, NUM_CLASSES);
        let (pred, best) = class
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, v)| (i, *v))
            .unwrap();
        let frames = session.last_call_frames;
        println!(
            "{line} -> class {pred} (logit {best:.3}, {} frames exchanged)",
            frames.0 + frames.1
        );
    }
    session.goodbye()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_toy(
    out: &std::path::Path,
    steps: usize,
    batch: usize,
    lr: f64,
    pll: bool,
    q: f64,
    gamma: Option<f64>,
    targets: &str,
    rank: usize,
    samples: usize,
    deploy: bool,
    seed: u64,
) -> Result<()> {
    let mut cfg = ToyModelConfig::toy_default();
    cfg.rank = rank;
    cfg.lora_targets = targets
        .split(',')
        .map(|t| match t.trim() {
            "q" => Ok(Target::Query),
            "k" => Ok(Target::Key),
            "v" => Ok(Target::Value),
            other => Err(anyhow!("unknown target {other:?} (use q, k, v)")),
        })
        .collect::<Result<Vec<_>>>()?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut model = ToyModel::init(&cfg, &mut rng)?;
    model.attach_plain_adapters(&mut rng);
    if deploy {
        let first = *model.adapters.keys().next().expect("adapters attached");
        model.adapters.retain(|k, _| *k == first);
        if !pll {
            bail!("--deploy requires --pll: a served adapter must be wrapped");
        }
    }
    if pll {
        let gamma = gamma.unwrap_or(1.5 * (cfg.d_model as f64).sqrt());
        let warnings = model.wrap_adapters_with_pll(q, Some(gamma), &mut rng)?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
    }

    let data = gen_classification_data(samples, 12, &mut rng);
    let train_cfg = TrainConfig { steps, batch, lr, seed, ..Default::default() };
    let report = train_toy_lora(&mut model, &data, &train_cfg)?;
    let eval = gen_classification_data(200, 12, &mut rng);
    let acc = accuracy(&model, &eval, &mut rng)?;
    println!(
        "trained {} adapters for {steps} steps: loss {:.4} -> {:.4}, eval accuracy {:.1}%",
        model.adapters.len(),
        report.initial_loss,
        report.final_loss,
        acc * 100.0
    );
    std::fs::write(out, model_to_bytes(&model, true))?;
    println!("wrote checkpoint to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench_tokens(
    server: Option<&str>,
    tokens: &[usize],
    rank: usize,
    trials: usize,
    parallel: bool,
    n: usize,
    out: Option<&std::path::Path>,
    seed: u64,
) -> Result<()> {
    let report = match server {
        Some(addr) => run_token_bench(addr, tokens, rank, trials, seed, parallel)?,
        None => {
            let params = Arc::new(build_params(n)?);
            let handle = spawn_local_server(params, rank, parallel, seed)?;
            let addr = handle.addr.to_string();
            let report = run_token_bench(&addr, tokens, rank, trials, seed, parallel)?;
            handle.shutdown();
            report
        }
    };

    println!("{}", report.config);
    println!("{:>8} {:>12} {:>16}", "tokens", "wall ms", "per-token ms");
    let med = report.median_by(|r| r.tokens);
    for &(tokens, pt) in &med {
        println!("{tokens:>8} {:>12.2} {pt:>16.4}", pt * tokens as f64);
    }
    if med.len() >= 2 {
        let (t0, first) = med[0];
        let (t1, last) = med[med.len() - 1];
        println!(
            "amortization: {:.1}% faster per token at {t1} vs {t0} tokens",
            (1.0 - last / first) * 100.0
        );
    }
    if let Some(path) = out {
        write_csv(path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_bench_rank(
    ranks: &[usize],
    tokens: usize,
    trials: usize,
    parallel: bool,
    n: usize,
    out: Option<&std::path::Path>,
    seed: u64,
) -> Result<()> {
    let params = Arc::new(build_params(n)?);
    let report = run_rank_bench(params, ranks, tokens, trials, seed, parallel)?;

    println!("{}", report.config);
    println!("{:>6} {:>16}", "rank", "per-token ms");
    let med = report.median_by(|r| r.rank);
    for &(rank, pt) in &med {
        println!("{rank:>6} {pt:>16.4}");
    }
    if med.len() >= 2 {
        let xs: Vec<f64> = med.iter().map(|&(r, _)| r as f64).collect();
        let ys: Vec<f64> = med.iter().map(|&(_, p)| p).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        println!("linear fit: {slope:.4} ms/token per rank unit, R^2 = {r2:.4}");
    }
    if let Some(path) = out {
        write_csv(path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_attack(mode: &str, n: usize, trials: usize, q: f64, csv: bool, seed: u64) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match mode {
        "plain" => {
            let truth = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let mut queries = 0usize;
            let mut oracle = |x: &Array1<f64>| {
                queries += 1;
                x.dot(&truth)
            };
            let out = extract_plain_linear(&mut oracle, n).map_err(|e| anyhow!("{e}"))?;
            let max_err = (&out.matrix - &truth).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            let exact = max_err == 0.0;
            if csv {
                println!("mode,n,queries,exact,max_error");
                println!("plain,{n},{queries},{exact},{max_err:e}");
            } else {
                println!(
                    "plain linear layer: recovered {n}x{n} matrix in {queries} queries, \
                     max error {max_err:e} (exact: {exact})"
                );
            }
        }
        "pll" => {
            if trials < 2 {
                bail!("pll mode needs --trials >= 2");
            }
            let cfg = PllConfig::with_default_gamma(n, n, n, q, 0);
            let w = plora_pll::pll_init(&cfg, &mut rng).map_err(|e| anyhow!("{e}"))?;
            let mut oracle_rng = ChaCha12Rng::seed_from_u64(seed ^ 0xA77AC);
            let mut oracle = pll_demod_oracle(&w, &mut oracle_rng);
            let report =
                extraction_residuals(&mut oracle, n, trials).map_err(|e| anyhow!("{e}"))?;
            if csv {
                println!("mode,n,q,queries,residual_variance,disagreement_rate");
                println!(
                    "pll,{n},{q},{},{:.6e},{:.4}",
                    n * trials,
                    report.residual_variance,
                    report.disagreement_rate
                );
            } else {
                println!(
                    "private layer (q={q}): {} queries across {n} directions x {trials} repeats",
                    n * trials
                );
                println!("  repeat-query disagreement rate: {:.4}", report.disagreement_rate);
                println!(
                    "  residual variance of the least-squares fit: {:.6e}",
                    report.residual_variance
                );
                println!("  (a deterministic plain layer gives zero on both counts)");
            }
        }
        other => bail!("unknown attack mode {other:?} (use plain or pll)"),
    }
    Ok(())
}

fn cmd_report(input: &std::path::Path, against: Option<&str>) -> Result<()> {
    let rows = read_csv(input)?;
    if rows.is_empty() {
        bail!("no rows in {input:?}");
    }
    let with_reference = match against {
        None => false,
        Some("paper") => true,
        Some(other) => bail!("unknown reference set {other:?} (only \"paper\" is available)"),
    };

    let print_group = |label: &str, prefix: &str, key: &dyn Fn(&plora_cli::bench::BenchRow) -> usize, reference: &[(u32, f64)]| {
        let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for r in rows.iter().filter(|r| r.run_id.starts_with(prefix)) {
            groups.entry(key(r)).or_default().push(r.per_token_ms);
        }
        if groups.is_empty() {
            return;
        }
        println!("{label} (measured, desk scale):");
        if with_reference {
            println!("{:>8} {:>18} {:>28}", "x", "measured ms/token", "reported s/token (reference)");
        } else {
            println!("{:>8} {:>18}", "x", "measured ms/token");
        }
        for (x, mut v) in groups {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = v[v.len() / 2];
            if with_reference {
                let reference = reference
                    .iter()
                    .find(|(t, _)| *t as usize == x)
                    .map(|(_, s)| format!("{s:.3}"))
                    .unwrap_or_else(|| "-".into());
                println!("{x:>8} {med:>18.4} {reference:>28}");
            } else {
                println!("{x:>8} {med:>18.4}");
            }
        }
    };

    print_group("token sweep", "tokens-", &|r| r.tokens, &REFERENCE_TOKEN_CURVE);
    print_group("rank sweep", "rank-", &|r| r.rank, &REFERENCE_RANK_CURVE);

    if with_reference {
        println!();
        println!("published systems (reported numbers, reference only):");
        println!("{:>6} {:>26} {:>12} {:>10} {:>10}", "year", "scheme", "model", "params", "s/token");
        for sys in SMALL_MODEL_SYSTEMS.iter().chain(LARGE_MODEL_SYSTEMS.iter()) {
            let spt =
                sys.seconds_per_token.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
            println!(
                "{:>6} {:>26} {:>12} {:>10} {:>10}",
                sys.year, sys.scheme, sys.model, sys.parameters, spt
            );
        }
        println!(
            "note: reference rows are billion-scale deployment numbers; desk-scale medians \
             above compare curve shape, not absolute time (reported optimum \
             {REFERENCE_OPTIMAL_S_PER_TOKEN} s/token)."
        );
    }
    Ok(())
}
