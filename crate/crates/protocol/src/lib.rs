//! Networked split inference: a framed byte protocol carrying key exchange,
//! model distribution and encrypted adapter calls between the key-holding
//! client and the adapter-holding server.
//!
//! Session shape: HELLO -> PARAMS, MODEL -> (PUBKEY, ROTKEYS unless cached)
//! and then any number of LORA_REQ/LORA_RESP pairs — exactly two frames per
//! adapter call after setup.

mod client;
mod error;
mod frame;
mod payload;
mod server;

pub use client::{connect, ClientSession};
pub use error::{ProtocolError, Result};
pub use frame::{Frame, FrameType, DEFAULT_MAX_FRAME, FRAME_MAGIC, HEADER_LEN, PROTOCOL_VERSION};
pub use payload::{Hello, LoraRequest, LoraResponse, SessionParams};
pub use server::{
    serve, serve_local, RecordedRound, ServerConfig, ServerHandle, ServerShared,
};
