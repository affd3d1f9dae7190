//! Head checkpoint file.
//!
//! Little-endian binary layout, version 1:
//!
//! | offset | size | field                                             |
//! |--------|------|---------------------------------------------------|
//! | 0      | 8    | magic `b"LLMEHEAD"`                               |
//! | 8      | 4    | format version (u32) = 1                          |
//! | 12     | 16   | `d`, `h`, `g`, `n_models` (u32 each)              |
//! | 28     | 8    | dropout probability (f64)                         |
//! | 36     | 8    | Huber delta used in training (f64)                |
//! | 44     | 1    | encoder kind: 0 = external file, 1 = hashed n-gram|
//! | 45     | 8    | hashed n-gram seed (u64, 0 for file)              |
//! | 53     | 8    | parameter count `P` (u64)                         |
//! | 61     | 8P   | parameters (f64), in head layout order            |
//! | 61+8P  | 32   | SHA-256 of every preceding byte                   |
//!
//! Parameter order: `w1 (d x h)`, `b1 (h)`, `glu_w (h x g)`, `glu_b (g)`,
//! `glu_v (h x g)`, `glu_c (g)`, `w2 (g x n)`, `b2 (n)`, matrices row-major.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::head::{HeadDims, PredictorHead};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LLMEHEAD";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    File,
    HashedNgram { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub head: PredictorHead,
    pub delta: f64,
    pub encoder: EncoderKind,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.head.dims();
        let params = self.head.params();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len() + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [dims.d, dims.h, dims.g, dims.n_models] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.head.dropout_p().to_le_bytes());
        out.extend_from_slice(&self.delta.to_le_bytes());
        let (kind, seed) = match self.encoder {
            EncoderKind::File => (0u8, 0u64),
            EncoderKind::HashedNgram { seed } => (1u8, seed),
        };
        out.push(kind);
        out.extend_from_slice(&seed.to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < HEADER_LEN + 32 {
            return Err(bad("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32();
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let dims = HeadDims::new(r.u32() as usize, r.u32() as usize, r.u32() as usize, r.u32() as usize)?;
        let dropout_p = r.f64();
        let delta = r.f64();
        let kind = r.u8();
        let seed = r.u64();
        let encoder = match kind {
            0 => EncoderKind::File,
            1 => EncoderKind::HashedNgram { seed },
            k => return Err(Error::Checkpoint(format!("unknown encoder kind {k}"))),
        };
        let count = r.u64() as usize;
        if count != dims.param_count() || body.len() != HEADER_LEN + 8 * count {
            return Err(bad("parameter count does not match dimensions"));
        }
        let params = (0..count).map(|_| r.f64()).collect();
        let head = PredictorHead::from_params(dims, dropout_p, params)?;
        Ok(Self { head, delta, encoder })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        a
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let head = PredictorHead::init(HeadDims::new(5, 4, 3, 2).unwrap(), 0.2, 42).unwrap();
        Checkpoint { head, delta: 0.3, encoder: EncoderKind::HashedNgram { seed: 17 } }
    }

    #[test]
    fn roundtrip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * ck.head.params().len() + 32);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[70] ^= 0x01;
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("checksum"));
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        assert!(Checkpoint::from_bytes(&[0u8; 10]).is_err());
    }
}
