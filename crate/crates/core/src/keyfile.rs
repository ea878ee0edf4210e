//! QKDR key files and the random-bit sources that feed the two stations.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QKDR"
//!      4     1  version (1)
//!      5     3  reserved, zero
//!      8     4  bit count, u32 little-endian
//!     12     …  ceil(bits / 8) payload bytes, bit i at byte i/8, position i%8
//! ```
//!
//! Unused high bits of the last byte are zero.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QKDR";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
/// Bits per block produced by `keygen`.
pub const BLOCK_BITS: u32 = 65535;

/// Pack 0/1 bits into a QKDR image.
pub fn encode_key(bits: &[u8]) -> Result<Vec<u8>> {
    let count = u32::try_from(bits.len()).map_err(|_| Error::KeyFile("more than u32::MAX bits".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + bits.len().div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&count.to_le_bytes());
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            match b {
                0 => {}
                1 => byte |= 1 << i,
                other => return Err(Error::KeyFile(format!("bit value {other} is not 0 or 1"))),
            }
        }
        out.push(byte);
    }
    Ok(out)
}

pub fn decode_key(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::KeyFile(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::KeyFile("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::KeyFile(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::KeyFile("reserved header bytes are not zero".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count.div_ceil(8) {
        return Err(Error::KeyFile(format!(
            "payload is {} bytes, {} bits need {}",
            payload.len(),
            count,
            count.div_ceil(8)
        )));
    }
    if !count.is_multiple_of(8) {
        let last = payload[payload.len() - 1];
        if last >> (count % 8) != 0 {
            return Err(Error::KeyFile("padding bits are not zero".into()));
        }
    }
    Ok((0..count).map(|i| (payload[i / 8] >> (i % 8)) & 1).collect())
}

pub fn write_key_file(path: &Path, bits: &[u8]) -> Result<()> {
    fs::write(path, encode_key(bits)?)?;
    Ok(())
}

pub fn read_key_file(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    decode_key(&bytes).map_err(|e| match e {
        Error::KeyFile(msg) => Error::KeyFile(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A seeded block of `bits` random bits.
pub fn generate_block(seed: u64, block: u64, bits: u32) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut out = Vec::with_capacity(bits as usize);
    while out.len() < bits as usize {
        let word = rng.next_u64();
        let take = (bits as usize - out.len()).min(64);
        out.extend((0..take).map(|i| ((word >> i) & 1) as u8));
    }
    out
}

/// Where a station draws its random bits from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BitOrigin {
    Prng { seed: u64 },
    KeyFiles(Vec<PathBuf>),
}

/// A one-shot stream of random bits. Bits are never served twice.
pub struct BitSource {
    inner: Inner,
    served: u64,
}

enum Inner {
    Prng { rng: Box<ChaCha8Rng>, word: u64, left: u32 },
    Bits(Vec<u8>),
}

impl BitSource {
    pub fn prng(seed: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Self { inner: Inner::Prng { rng: Box::new(rng), word: 0, left: 0 }, served: 0 }
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        Self { inner: Inner::Bits(bits), served: 0 }
    }

    pub fn from_key_files(paths: &[PathBuf]) -> Result<Self> {
        let mut bits = Vec::new();
        for p in paths {
            bits.extend(read_key_file(p)?);
        }
        Ok(Self::from_bits(bits))
    }

    pub fn open(origin: &BitOrigin) -> Result<Self> {
        match origin {
            BitOrigin::Prng { seed } => Ok(Self::prng(*seed)),
            BitOrigin::KeyFiles(paths) => Self::from_key_files(paths),
        }
    }

    /// Bits still available, or `None` for an unbounded generator.
    pub fn remaining(&self) -> Option<u64> {
        match &self.inner {
            Inner::Prng { .. } => None,
            Inner::Bits(b) => Some(b.len() as u64 - self.served),
        }
    }

    pub fn ensure(&self, needed: u64) -> Result<()> {
        match self.remaining() {
            Some(left) if left < needed => {
                Err(Error::config(format!("bit source holds {left} bits but the session needs {needed}")))
            }
            _ => Ok(()),
        }
    }

    pub fn next_bit(&mut self) -> Result<u8> {
        let bit = match &mut self.inner {
            Inner::Prng { rng, word, left } => {
                if *left == 0 {
                    *word = rng.random();
                    *left = 64;
                }
                let b = (*word & 1) as u8;
                *word >>= 1;
                *left -= 1;
                b
            }
            Inner::Bits(bits) => {
                *bits.get(self.served as usize).ok_or_else(|| Error::config("bit source exhausted"))?
            }
        };
        self.served += 1;
        Ok(bit)
    }
}
