//! Attribute-constrained few-shot recognition.
//!
//! Label text of the support categories builds a latent attribute space that
//! steers cross-attention over frozen visual features; queries are matched
//! to the constrained prototypes with a soft-DTW alignment distance.

pub mod aam;
pub mod align;
pub mod bench;
pub mod config;
pub mod encoder;
pub mod error;
pub mod fewshot;
pub mod schema;
pub mod seed;
pub mod tcm;

pub use error::{Error, Result};

use std::path::Path;

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
