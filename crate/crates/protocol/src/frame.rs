//! Wire framing: magic "PLLI", version, message type, length-prefixed payload.
//!
//! Layout (little-endian): magic (4) | version (u16) | type (u8) | len (u32) |
//! payload. Unknown types, bad magic, truncation and oversized frames are
//! framing errors; the connection owner decides whether the session survives.

use std::io::{Read, Write};

use crate::error::{ProtocolError, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"PLLI";
pub const PROTOCOL_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4;

/// Default frame cap: 64 MiB. Override with the PLORA_MAX_FRAME_MIB env var.
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024 * 1024;

pub fn max_frame_len() -> usize {
    std::env::var("PLORA_MAX_FRAME_MIB")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map(|mib| mib * 1024 * 1024)
        .unwrap_or(DEFAULT_MAX_FRAME)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameType {
    Hello,
    Params,
    PubKey,
    RotKeys,
    Model,
    LoraReq,
    LoraResp,
    Error,
    Bye,
}

impl FrameType {
    pub fn tag(self) -> u8 {
        match self {
            FrameType::Hello => 1,
            FrameType::Params => 2,
            FrameType::PubKey => 3,
            FrameType::RotKeys => 4,
            FrameType::Model => 5,
            FrameType::LoraReq => 6,
            FrameType::LoraResp => 7,
            FrameType::Error => 8,
            FrameType::Bye => 9,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            1 => FrameType::Hello,
            2 => FrameType::Params,
            3 => FrameType::PubKey,
            4 => FrameType::RotKeys,
            5 => FrameType::Model,
            6 => FrameType::LoraReq,
            7 => FrameType::LoraResp,
            8 => FrameType::Error,
            9 => FrameType::Bye,
            other => return Err(ProtocolError::Framing(format!("unknown frame type {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub version: u16,
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Self {
        Self { version: PROTOCOL_VERSION, frame_type, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.frame_type.tag());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < HEADER_LEN {
            return Err(ProtocolError::Framing("truncated header".into()));
        }
        if &bytes[..4] != FRAME_MAGIC {
            return Err(ProtocolError::Framing("bad magic".into()));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        let frame_type = FrameType::from_tag(bytes[6])?;
        let len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        if len > max_frame_len() {
            return Err(ProtocolError::Framing(format!("frame of {len} bytes exceeds cap")));
        }
        if bytes.len() != HEADER_LEN + len {
            return Err(ProtocolError::Framing(format!(
                "length field {len} does not match payload {}",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok(Frame { version, frame_type, payload: bytes[HEADER_LEN..].to_vec() })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..4] != FRAME_MAGIC {
            return Err(ProtocolError::Framing("bad magic".into()));
        }
        let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
        let frame_type = FrameType::from_tag(header[6])?;
        let len = u32::from_le_bytes(header[7..11].try_into().unwrap()) as usize;
        if len > max_frame_len() {
            return Err(ProtocolError::Framing(format!("frame of {len} bytes exceeds cap")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Frame { version, frame_type, payload })
    }
}
