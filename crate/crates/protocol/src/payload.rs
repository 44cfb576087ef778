//! Payload encodings for the session messages. Frames carry opaque bytes;
//! these codecs give them structure.

use plora_he_linalg::PackLayout;
use plora_toymodel::{SplitPoint, Target};

use crate::error::{ProtocolError, Result};

pub(crate) struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.data.len() {
            return Err(ProtocolError::Framing("truncated payload".into()));
        }
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }


    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn blob(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn done(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(ProtocolError::Framing("trailing payload bytes".into()));
        }
        Ok(())
    }
}

pub(crate) fn put_blob(buf: &mut Vec<u8>, blob: &[u8]) {
    buf.extend_from_slice(&(blob.len() as u32).to_le_bytes());
    buf.extend_from_slice(blob);
}

// ── HELLO ────────────────────────────────────────────────────────────────

pub struct Hello {
    /// Fingerprint of the client's public key material; zeros when the client
    /// has no keys yet.
    pub key_fingerprint: [u8; 32],
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        self.key_fingerprint.to_vec()
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        if data.len() != 32 {
            return Err(ProtocolError::Framing("HELLO must carry a 32-byte fingerprint".into()));
        }
        Ok(Self { key_fingerprint: data.try_into().unwrap() })
    }
}

// ── PARAMS ───────────────────────────────────────────────────────────────

pub struct SessionParams {
    pub session_id: u64,
    /// Server already holds keys under the announced fingerprint.
    pub keys_cached: bool,
    /// Demodulation modulus of the private layer.
    pub q: f64,
    pub split: SplitPoint,
    /// Layout template; d is a placeholder (1) until each call fixes it.
    pub layout: PackLayout,
    /// Serialized CKKS parameters.
    pub params_blob: Vec<u8>,
}

impl SessionParams {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&self.session_id.to_le_bytes());
        buf.push(self.keys_cached as u8);
        buf.extend_from_slice(&self.q.to_le_bytes());
        buf.extend_from_slice(&(self.split.layer as u32).to_le_bytes());
        buf.push(self.split.target.tag());
        buf.extend_from_slice(&self.layout.to_bytes());
        put_blob(&mut buf, &self.params_blob);
        buf
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(data);
        let session_id = c.u64()?;
        let keys_cached = c.u8()? != 0;
        let q = c.f64()?;
        let layer = c.u32()? as usize;
        let target = Target::from_tag(c.u8()?)?;
        let layout = PackLayout::from_bytes(c.take(36)?)?;
        let params_blob = c.blob()?.to_vec();
        c.done()?;
        Ok(Self {
            session_id,
            keys_cached,
            q,
            split: SplitPoint { layer, target },
            layout,
            params_blob,
        })
    }
}

// ── LORA_REQ / LORA_RESP ─────────────────────────────────────────────────

pub struct LoraRequest {
    pub round: u64,
    pub layout: PackLayout,
    pub ciphertexts: Vec<Vec<u8>>,
}

impl LoraRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&self.round.to_le_bytes());
        buf.extend_from_slice(&self.layout.to_bytes());
        buf.extend_from_slice(&(self.ciphertexts.len() as u32).to_le_bytes());
        for ct in &self.ciphertexts {
            put_blob(&mut buf, ct);
        }
        buf
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(data);
        let round = c.u64()?;
        let layout = PackLayout::from_bytes(c.take(36)?)?;
        let count = c.u32()? as usize;
        if count > 1 << 16 {
            return Err(ProtocolError::Framing("unreasonable ciphertext count".into()));
        }
        let mut ciphertexts = Vec::with_capacity(count);
        for _ in 0..count {
            ciphertexts.push(c.blob()?.to_vec());
        }
        c.done()?;
        Ok(Self { round, layout, ciphertexts })
    }
}

pub struct LoraResponse {
    pub round: u64,
    pub ciphertexts: Vec<Vec<u8>>,
}

impl LoraResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&self.round.to_le_bytes());
        buf.extend_from_slice(&(self.ciphertexts.len() as u32).to_le_bytes());
        for ct in &self.ciphertexts {
            put_blob(&mut buf, ct);
        }
        buf
    }

    pub fn decode(data: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(data);
        let round = c.u64()?;
        let count = c.u32()? as usize;
        if count > 1 << 16 {
            return Err(ProtocolError::Framing("unreasonable ciphertext count".into()));
        }
        let mut ciphertexts = Vec::with_capacity(count);
        for _ in 0..count {
            ciphertexts.push(c.blob()?.to_vec());
        }
        c.done()?;
        Ok(Self { round, ciphertexts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_roundtrip() {
        let layout = PackLayout::new(1, 64, 8, 64, 4096).unwrap();
        let p = SessionParams {
            session_id: 42,
            keys_cached: true,
            q: 8.0,
            split: SplitPoint { layer: 1, target: Target::Value },
            layout: layout.clone(),
            params_blob: vec![1, 2, 3, 4],
        };
        let back = SessionParams::decode(&p.encode()).unwrap();
        assert_eq!(back.session_id, 42);
        assert!(back.keys_cached);
        assert_eq!(back.q, 8.0);
        assert_eq!(back.split, SplitPoint { layer: 1, target: Target::Value });
        assert_eq!(back.layout, layout);
        assert_eq!(back.params_blob, vec![1, 2, 3, 4]);
    }

    #[test]
    fn request_roundtrip() {
        let layout = PackLayout::new(3, 16, 2, 8, 1024).unwrap();
        let req = LoraRequest {
            round: 7,
            layout: layout.clone(),
            ciphertexts: vec![vec![9; 100], vec![8; 50]],
        };
        let back = LoraRequest::decode(&req.encode()).unwrap();
        assert_eq!(back.round, 7);
        assert_eq!(back.layout, layout);
        assert_eq!(back.ciphertexts.len(), 2);
    }
}
