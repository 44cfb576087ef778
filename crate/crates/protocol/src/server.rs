//! The adapter-serving side.
//!
//! The server owns the fine-tuned model (base + exactly one wrapped adapter),
//! hands the base checkpoint to connecting clients, caches their public key
//! material by fingerprint, and answers encrypted adapter calls. Its state
//! holds `PublicKeySet`s only — the secret key type never appears here, so
//! decryption on the server side is unrepresentable.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use plora_ckks::{wire, CkksParams, PublicKeySet};
use plora_he_linalg::{build_server_operands, he_lora_apply, PackLayout, PackedMatrix};
use plora_pll::{sample_round, PllWeights};
use plora_toymodel::{model_to_bytes, AdapterKind, SplitPoint, ToyModel};

use crate::error::{ProtocolError, Result};
use crate::frame::{Frame, FrameType};
use crate::payload::{Hello, LoraRequest, LoraResponse, SessionParams};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Fan kernel chunks out across threads.
    pub parallel: bool,
    /// Keep (session, round, P, k) for test comparison.
    pub record_rounds: bool,
    /// Seed for per-session round randomness.
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { parallel: false, record_rounds: false, seed: 0 }
    }
}

/// A recorded per-call round, exported for oracle comparison in tests.
#[derive(Clone, Debug)]
pub struct RecordedRound {
    pub session: u64,
    pub round: u64,
    pub p: Array2<f64>,
    pub k: Array2<f64>,
}

pub struct ServerShared {
    pub params: Arc<CkksParams>,
    model: ToyModel,
    base_blob: Vec<u8>,
    split: SplitPoint,
    weights: PllWeights,
    layout_template: PackLayout,
    config: ServerConfig,
    key_cache: Mutex<HashMap<[u8; 32], Arc<PublicKeySet>>>,
    next_session: AtomicU64,
    rounds: Mutex<Vec<RecordedRound>>,
    requests_served: AtomicU64,
}

impl ServerShared {
    pub fn recorded_rounds(&self) -> Vec<RecordedRound> {
        self.rounds.lock().unwrap().clone()
    }

    pub fn requests_served(&self) -> u64 {
        self.requests_served.load(Ordering::Relaxed)
    }

    pub fn cached_key_count(&self) -> usize {
        self.key_cache.lock().unwrap().len()
    }

    pub fn split(&self) -> SplitPoint {
        self.split
    }

    pub fn weights(&self) -> &PllWeights {
        &self.weights
    }
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    pub shared: Arc<ServerShared>,
    stop: Arc<AtomicBool>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

/// Start serving on the listener. The model must carry exactly one wrapped
/// adapter: that adapter is the private layer every session calls into.
pub fn serve(
    listener: TcpListener,
    params: Arc<CkksParams>,
    model: ToyModel,
    config: ServerConfig,
) -> Result<ServerHandle> {
    let mut wrapped: Vec<(SplitPoint, PllWeights)> = Vec::new();
    for (&(layer, target), adapter) in &model.adapters {
        match &adapter.kind {
            AdapterKind::Pll(w) => wrapped.push((SplitPoint { layer, target }, w.clone())),
            AdapterKind::Plain { .. } => {
                return Err(ProtocolError::Handshake(
                    "server model must not carry plain adapters (private weights would have \
                     nowhere to hide)"
                        .into(),
                ))
            }
        }
    }
    if wrapped.len() != 1 {
        return Err(ProtocolError::Handshake(format!(
            "server model must carry exactly one wrapped adapter, found {}",
            wrapped.len()
        )));
    }
    let (split, weights) = wrapped.pop().unwrap();
    let d_model = model.config.d_model;
    let layout_template =
        PackLayout::new(1, d_model, weights.config.lora_rank, d_model, params.slot_count())?;

    let base_blob = model_to_bytes(&model, false);
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let shared = Arc::new(ServerShared {
        params,
        model,
        base_blob,
        split,
        weights,
        layout_template,
        config,
        key_cache: Mutex::new(HashMap::new()),
        next_session: AtomicU64::new(1),
        rounds: Mutex::new(Vec::new()),
        requests_served: AtomicU64::new(0),
    });

    let stop = Arc::new(AtomicBool::new(false));
    let accept_shared = shared.clone();
    let accept_stop = stop.clone();
    let join = std::thread::spawn(move || {
        while !accept_stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let conn_shared = accept_shared.clone();
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, conn_shared);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
        }
    });

    Ok(ServerHandle { addr, shared, stop, join: Some(join) })
}

fn send_error(stream: &mut TcpStream, msg: &str) -> Result<()> {
    Frame::new(FrameType::Error, msg.as_bytes().to_vec()).write_to(stream)
}

fn handle_connection(mut stream: TcpStream, shared: Arc<ServerShared>) -> Result<()> {
    stream.set_nodelay(true)?;

    // ── handshake ───────────────────────────────────────────────────────
    let hello_frame = Frame::read_from(&mut stream)?;
    if hello_frame.frame_type != FrameType::Hello {
        send_error(&mut stream, "expected HELLO")?;
        return Err(ProtocolError::Handshake("expected HELLO".into()));
    }
    let hello = Hello::decode(&hello_frame.payload)?;
    let announced = hello.key_fingerprint;
    let cached_keys = if announced != [0u8; 32] {
        shared.key_cache.lock().unwrap().get(&announced).cloned()
    } else {
        None
    };

    let session_id = shared.next_session.fetch_add(1, Ordering::SeqCst);
    let params_msg = SessionParams {
        session_id,
        keys_cached: cached_keys.is_some(),
        q: shared.weights.config.q,
        split: shared.split,
        layout: shared.layout_template.clone(),
        params_blob: wire::params_to_bytes(&shared.params),
    };
    Frame::new(FrameType::Params, params_msg.encode()).write_to(&mut stream)?;
    Frame::new(FrameType::Model, shared.base_blob.clone()).write_to(&mut stream)?;

    let keys: Arc<PublicKeySet> = match cached_keys {
        Some(k) => k,
        None => {
            let pk_frame = Frame::read_from(&mut stream)?;
            if pk_frame.frame_type != FrameType::PubKey {
                send_error(&mut stream, "expected PUBKEY before adapter calls")?;
                return Err(ProtocolError::Handshake("key exchange incomplete".into()));
            }
            let pk = wire::enc_key_from_bytes(&shared.params, &pk_frame.payload)?;
            let rot_frame = Frame::read_from(&mut stream)?;
            if rot_frame.frame_type != FrameType::RotKeys {
                send_error(&mut stream, "expected ROTKEYS before adapter calls")?;
                return Err(ProtocolError::Handshake("key exchange incomplete".into()));
            }
            let rotations = wire::rotation_keys_from_bytes(&shared.params, &rot_frame.payload)?;
            let set = Arc::new(wire::assemble_public_keys(&shared.params, pk, rotations));
            shared.key_cache.lock().unwrap().insert(set.fingerprint, set.clone());
            set
        }
    };

    // per-session round randomness: derived from the server seed and session id
    let mut round_rng = ChaCha12Rng::seed_from_u64(shared.config.seed ^ session_id.wrapping_mul(0x9E3779B97F4A7C15));
    let mut last_round = 0u64;

    // ── request loop ────────────────────────────────────────────────────
    loop {
        let frame = match Frame::read_from(&mut stream) {
            Ok(f) => f,
            Err(_) => break, // disconnect or framing corruption: close the session
        };
        match frame.frame_type {
            FrameType::Bye => break,
            FrameType::LoraReq => {
                match handle_request(&shared, &keys, &frame.payload, &mut last_round, &mut round_rng, session_id) {
                    Ok(resp) => {
                        Frame::new(FrameType::LoraResp, resp.encode()).write_to(&mut stream)?
                    }
                    Err(e) => {
                        // request-level failure: report and keep the session alive
                        send_error(&mut stream, &e.to_string())?;
                    }
                }
            }
            other => {
                send_error(&mut stream, &format!("unexpected {other:?} frame"))?;
            }
        }
    }
    Ok(())
}

fn handle_request(
    shared: &ServerShared,
    keys: &PublicKeySet,
    payload: &[u8],
    last_round: &mut u64,
    round_rng: &mut ChaCha12Rng,
    session_id: u64,
) -> Result<LoraResponse> {
    let req = LoraRequest::decode(payload)?;
    if req.round <= *last_round {
        return Err(ProtocolError::Session(format!(
            "round counter must increase: got {}, last {}",
            req.round, *last_round
        )));
    }
    let t = &shared.layout_template;
    if req.layout.m != t.m || req.layout.r != t.r || req.layout.n != t.n
        || req.layout.slot_count != t.slot_count
    {
        return Err(ProtocolError::Session("layout does not match the session template".into()));
    }
    if req.ciphertexts.len() != req.layout.ct_count {
        return Err(ProtocolError::Session(format!(
            "request carries {} ciphertexts, layout wants {}",
            req.ciphertexts.len(),
            req.layout.ct_count
        )));
    }

    let mut cts = Vec::with_capacity(req.ciphertexts.len());
    for blob in &req.ciphertexts {
        cts.push(wire::ciphertext_from_bytes(&shared.params, blob)?);
    }
    let level = cts[0].level;
    let scale = cts[0].scale;
    let packed = PackedMatrix { layout: req.layout.clone(), cts, level, scale };

    // fresh randomness for this round
    let d = req.layout.d;
    let round = sample_round(&shared.weights, d, round_rng)?;
    if shared.config.record_rounds {
        shared.rounds.lock().unwrap().push(RecordedRound {
            session: session_id,
            round: req.round,
            p: round.p.clone(),
            k: round.k.clone(),
        });
    }

    let (a1, a2) = match &shared.weights.matrix {
        plora_pll::PllMatrix::Factored { a1, a2 } => (a1.clone(), a2.clone()),
        plora_pll::PllMatrix::Dense(_) => {
            return Err(ProtocolError::Session("server weights must be factored".into()))
        }
    };
    let junk_bound = shared.weights.config.q * shared.weights.config.k_bound() as f64;
    let mut junk_rng = ChaCha12Rng::seed_from_u64(round_rng.random());
    let ops = build_server_operands(
        &shared.params,
        &req.layout,
        &a1,
        &a2,
        &round.qt,
        Some(junk_bound),
        &mut junk_rng,
    )?;

    let (result, _stats) =
        he_lora_apply(&shared.params, &packed, &ops, keys, shared.config.parallel)?;
    shared.requests_served.fetch_add(1, Ordering::Relaxed);
    // commit the round only once the request has been fully served; a
    // rejected request must not burn round numbers
    *last_round = req.round;

    Ok(LoraResponse {
        round: req.round,
        ciphertexts: result
            .cts
            .iter()
            .map(|ct| wire::ciphertext_to_bytes(&shared.params, ct))
            .collect(),
    })
}

/// Convenience for tests and the CLI: bind an ephemeral local port.
pub fn serve_local(
    params: Arc<CkksParams>,
    model: ToyModel,
    config: ServerConfig,
) -> Result<ServerHandle> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    serve(listener, params, model, config)
}

// internal access for the model distribution path
impl ServerShared {
    pub fn model(&self) -> &ToyModel {
        &self.model
    }
}
