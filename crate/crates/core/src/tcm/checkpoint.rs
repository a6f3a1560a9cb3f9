//! Checkpoint archive.
//!
//! ```text
//! magic      8 bytes  "AAPMCKPT"
//! version    u32 LE
//! config     u32 LE length + UTF-8 JSON (d, heads, ffn_width, variant, seed, ...)
//! blocks     u32 LE count, then per block:
//!              u16 LE name length + UTF-8 name
//!              u32 LE rows, u32 LE cols
//!              rows·cols little-endian f32, row-major
//! ```

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{TcmConfig, TcmParams, TcmWeights};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"AAPMCKPT";

pub fn to_bytes(params: &TcmParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(&params.config).expect("config serializes");
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    let blocks = params.weights.blocks();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, a) in blocks {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(a.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(a.ncols() as u32).to_le_bytes());
        for v in a.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated archive".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TcmParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let config: TcmConfig = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("config record: {e}")))?;
    let mut params = TcmParams::init(TcmConfig {
        output_init_std: 0.0,
        ..config
    })?;
    params.config = config;
    let count = r.u32()? as usize;
    let mut seen = Vec::new();
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let raw = r.take(rows * cols * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut blocks = params.weights.blocks_mut();
        let (_, slot) = blocks
            .iter_mut()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown block `{name}`")))?;
        if slot.dim() != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "block `{name}` has shape {rows}×{cols}, expected {:?}",
                slot.dim()
            )));
        }
        **slot = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
        seen.push(name);
    }
    if let Some(missing) = TcmWeights::NAMES.iter().find(|n| !seen.iter().any(|s| s == *n)) {
        return Err(Error::Checkpoint(format!("missing block `{missing}`")));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &TcmParams, path: &Path) -> Result<()> {
    crate::write_atomic(path, &to_bytes(params))
}

pub fn load_checkpoint(path: &Path) -> Result<TcmParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// SHA-256 of the archive encoding, used to show evaluation leaves the
/// parameters untouched.
pub fn checksum(params: &TcmParams) -> String {
    hex::encode(Sha256::digest(to_bytes(params)))
}

/// Rounds every weight to `f32`, matching what a save/load cycle yields.
pub fn quantize(params: &mut TcmParams) {
    for (_, a) in params.weights.blocks_mut() {
        a.mapv_inplace(|v| v as f32 as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_after_quantize() {
        let mut p = TcmParams::init(TcmConfig {
            d: 8,
            heads: 2,
            ffn_width: 12,
            output_init_std: 0.1,
            ..TcmConfig::default()
        })
        .unwrap();
        quantize(&mut p);
        let back = from_bytes(&to_bytes(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_corruption() {
        let p = TcmParams::init(TcmConfig::with_width(8)).unwrap();
        let mut bytes = to_bytes(&p);
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[8] = 9;
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(_))));
    }
}
