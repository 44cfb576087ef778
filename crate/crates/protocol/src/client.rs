//! The key-holding side: handshake, key upload (skipped on cache hits), and
//! the blocking encrypted adapter call.

use std::net::TcpStream;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use plora_ckks::{keygen, wire, CkksParams, KeyMaterial};
use plora_he_linalg::{extract_result, pack_input, PackLayout, PackedMatrix};
use plora_pll::demodulate;
use plora_toymodel::{model_from_bytes, SplitPoint, ToyModel};

use crate::error::{ProtocolError, Result};
use crate::frame::{Frame, FrameType};
use crate::payload::{Hello, LoraRequest, LoraResponse, SessionParams};

pub struct ClientSession {
    stream: TcpStream,
    pub session_id: u64,
    pub params: Arc<CkksParams>,
    pub keys: Arc<KeyMaterial>,
    /// Base model received in-band; carries no adapter weights.
    pub model: ToyModel,
    pub split: SplitPoint,
    pub q: f64,
    layout_template: PackLayout,
    round: u64,
    rng: ChaCha12Rng,
    /// (sent, received) over the last adapter call.
    pub last_call_frames: (usize, usize),
    /// True when the server reported a key-cache hit for our fingerprint.
    pub keys_were_cached: bool,
}

/// Connect, negotiate parameters, receive the base model, and upload keys
/// unless the server already has them. `existing_keys` enables fingerprint
/// cache hits across sessions.
pub fn connect(
    addr: &str,
    existing_keys: Option<Arc<KeyMaterial>>,
    seed: u64,
) -> Result<ClientSession> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;

    let fingerprint = existing_keys
        .as_ref()
        .map(|k| k.public.fingerprint)
        .unwrap_or([0u8; 32]);
    Frame::new(FrameType::Hello, Hello { key_fingerprint: fingerprint }.encode())
        .write_to(&mut stream)?;

    let params_frame = expect(&mut stream, FrameType::Params)?;
    let sp = SessionParams::decode(&params_frame.payload)?;
    let params = Arc::new(wire::params_from_bytes(&sp.params_blob)?);

    let model_frame = expect(&mut stream, FrameType::Model)?;
    let model = model_from_bytes(&model_frame.payload)?;
    if !model.adapters.is_empty() {
        return Err(ProtocolError::Handshake(
            "server shipped adapter weights in the public model".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let keys = match &existing_keys {
        Some(k) => {
            if k.public.params_fp != params.fingerprint() {
                return Err(ProtocolError::Handshake(
                    "existing keys were generated for different parameters".into(),
                ));
            }
            k.clone()
        }
        None => Arc::new(keygen(&params, &sp.layout.required_steps(), &mut rng)?),
    };

    if !sp.keys_cached {
        Frame::new(FrameType::PubKey, wire::enc_key_to_bytes(&params, &keys.public))
            .write_to(&mut stream)?;
        Frame::new(FrameType::RotKeys, wire::rotation_keys_to_bytes(&params, &keys.public))
            .write_to(&mut stream)?;
    }

    Ok(ClientSession {
        stream,
        session_id: sp.session_id,
        params,
        keys,
        model,
        split: sp.split,
        q: sp.q,
        layout_template: sp.layout,
        round: 0,
        rng,
        last_call_frames: (0, 0),
        keys_were_cached: sp.keys_cached,
    })
}

fn expect(stream: &mut TcpStream, want: FrameType) -> Result<Frame> {
    let frame = Frame::read_from(stream)?;
    if frame.frame_type == FrameType::Error {
        return Err(ProtocolError::Remote(String::from_utf8_lossy(&frame.payload).into_owned()));
    }
    if frame.frame_type != want {
        return Err(ProtocolError::Handshake(format!(
            "expected {want:?}, got {:?}",
            frame.frame_type
        )));
    }
    Ok(frame)
}

impl ClientSession {
    /// Encrypted adapter round trip: pack and encrypt x, send it, decrypt the
    /// response and strip the kq masking. Exactly one request and one
    /// response frame per call.
    pub fn lora_call(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.round += 1;
        let d = x.nrows();
        let t = &self.layout_template;
        let layout = PackLayout::new(d, t.m, t.r, t.n, t.slot_count)?;

        let packed = pack_input(&self.params, x, &layout, &self.keys.public, &mut self.rng)?;
        let req = LoraRequest {
            round: self.round,
            layout,
            ciphertexts: packed
                .cts
                .iter()
                .map(|ct| wire::ciphertext_to_bytes(&self.params, ct))
                .collect(),
        };
        Frame::new(FrameType::LoraReq, req.encode()).write_to(&mut self.stream)?;
        let frame = Frame::read_from(&mut self.stream)?;
        self.last_call_frames = (1, 1);
        if frame.frame_type == FrameType::Error {
            return Err(ProtocolError::Remote(
                String::from_utf8_lossy(&frame.payload).into_owned(),
            ));
        }
        if frame.frame_type != FrameType::LoraResp {
            return Err(ProtocolError::Session(format!(
                "expected LORA_RESP, got {:?}",
                frame.frame_type
            )));
        }
        let resp = LoraResponse::decode(&frame.payload)?;
        if resp.round != self.round {
            return Err(ProtocolError::Session(format!(
                "response round {} does not match request {}",
                resp.round, self.round
            )));
        }

        let mut cts = Vec::with_capacity(resp.ciphertexts.len());
        for blob in &resp.ciphertexts {
            cts.push(wire::ciphertext_from_bytes(&self.params, blob)?);
        }
        if cts.is_empty() {
            return Err(ProtocolError::Session("empty response".into()));
        }
        // depth contract enforced at the protocol boundary
        let expected_level = self.params.max_level() - 3;
        if cts[0].level != expected_level {
            return Err(ProtocolError::Session(format!(
                "response at level {}, expected {expected_level}",
                cts[0].level
            )));
        }

        let layout = PackLayout::new(d, t.m, t.r, t.n, t.slot_count)?;
        let result = PackedMatrix { layout, level: cts[0].level, scale: cts[0].scale, cts };
        let raw = extract_result(&self.params, &result, &self.keys.secret)?;
        Ok(demodulate(&raw, self.q)?)
    }

    /// Full split inference: client-side forward to the split point, encrypted
    /// adapter call, resume to logits.
    pub fn infer(&mut self, tokens: &[u8]) -> Result<Array2<f64>> {
        let split = self.split;
        let (x_l, state) = self.model.pinf1(tokens, split, None)?;
        let demodulated = self.lora_call(&x_l)?;
        let scaling = self.model.config.alpha / self.model.config.rank as f64;
        let bypass = demodulated * scaling;
        Ok(self.model.pinf2(&state, &bypass, None)?)
    }

    pub fn round_counter(&self) -> u64 {
        self.round
    }

    pub fn goodbye(mut self) -> Result<()> {
        Frame::new(FrameType::Bye, vec![]).write_to(&mut self.stream)
    }

    /// Send a raw frame on the session stream (tamper-injection test hook).
    pub fn send_raw(&mut self, frame: &Frame) -> Result<Frame> {
        frame.write_to(&mut self.stream)?;
        Frame::read_from(&mut self.stream)
    }
}
