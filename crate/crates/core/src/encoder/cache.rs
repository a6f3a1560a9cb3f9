//! On-disk feature cache.
//!
//! Layout: `index.jsonl` with one record per feature plus a binary payload
//! per record (little-endian `f32`, row-major). External extractors write the
//! same layout to hand features to this crate.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Encoder, TextFeature, VisualFeature, TEXT_TEMPLATE};
use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, VideoSample};
use crate::seed;

pub const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Visual,
    Text,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    pub kind: RecordKind,
    #[serde(default)]
    pub t: usize,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub file: String,
    #[serde(default)]
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

/// Outcome of a [`cache_features`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheReport {
    /// Visual records encoded in this run.
    pub written: usize,
    /// Visual records already present and verified.
    pub skipped: usize,
    pub text_written: usize,
    pub text_skipped: usize,
}

pub fn text_id(attribute: &str, category: &str) -> String {
    format!("text:{attribute}/{category}")
}

pub fn encode_f32(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

pub fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A cache directory opened for reading.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
    records: BTreeMap<String, IndexRecord>,
}

impl FeatureCache {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let mut records = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: IndexRecord = serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
                    path: path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                records.insert(rec.id.clone(), rec);
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            records,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self, id: &str) -> Option<&IndexRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.values().filter(|r| r.kind != RecordKind::Meta).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn payload(&self, rec: &IndexRecord) -> Result<Vec<f64>> {
        let path = self.dir.join(&rec.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha_hex(&bytes) != rec.sha256 {
            return Err(Error::HashMismatch(rec.id.clone()));
        }
        let expected = rec.t.max(1) * rec.d;
        if bytes.len() != expected * 4 {
            return Err(Error::HashMismatch(rec.id.clone()));
        }
        Ok(decode_f32(&bytes))
    }

    /// Verifies the payload of `id` against its recorded hash.
    pub fn verify(&self, id: &str) -> Result<()> {
        let rec = self
            .records
            .get(id)
            .ok_or_else(|| Error::SourceUnavailable(id.to_string()))?;
        self.payload(rec).map(|_| ())
    }

    pub fn load_visual(&self, id: &str) -> Result<VisualFeature> {
        let rec = self
            .records
            .get(id)
            .filter(|r| r.kind == RecordKind::Visual)
            .ok_or_else(|| Error::SourceUnavailable(id.to_string()))?;
        let values = self.payload(rec)?;
        let tokens = Array2::from_shape_vec((rec.t, rec.d), values)
            .map_err(|_| Error::HashMismatch(id.to_string()))?;
        Ok(VisualFeature {
            sample_id: id.to_string(),
            tokens,
        })
    }

    pub fn load_text(&self, attribute: &str, category: &str) -> Result<TextFeature> {
        let id = text_id(attribute, category);
        let rec = self
            .records
            .get(&id)
            .filter(|r| r.kind == RecordKind::Text)
            .ok_or_else(|| Error::UnknownCategory {
                attribute: attribute.to_string(),
                category: category.to_string(),
            })?;
        Ok(TextFeature {
            attribute: attribute.to_string(),
            category: category.to_string(),
            vector: Array1::from(self.payload(rec)?),
        })
    }
}

fn write_payload(dir: &Path, id: &str, kind: RecordKind, t: usize, d: usize, values: Vec<u8>) -> Result<IndexRecord> {
    let prefix = match kind {
        RecordKind::Visual => "v",
        _ => "t",
    };
    let file = format!("{prefix}_{:016x}.f32", seed::key(id));
    crate::write_atomic(&dir.join(&file), &values)?;
    Ok(IndexRecord {
        id: id.to_string(),
        kind,
        t,
        d,
        file,
        sha256: sha_hex(&values),
        template: None,
    })
}

/// Encodes every sample (and every label text of `schema`) into `dir`.
///
/// Records already present with a matching hash are skipped; a present
/// record whose payload no longer matches its hash fails the run.
pub fn cache_features(
    samples: &[VideoSample],
    schema: &AttributeSchema,
    encoder: &dyn Encoder,
    dir: &Path,
) -> Result<CacheReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let existing = FeatureCache::open(dir)?;
    let mut records = existing.records.clone();
    let mut report = CacheReport::default();

    let present = |id: &str| -> Result<bool> {
        if existing.records.contains_key(id) {
            existing.verify(id)?;
            Ok(true)
        } else {
            Ok(false)
        }
    };

    let mut fresh = Vec::new();
    for s in samples {
        if present(&s.id)? {
            report.skipped += 1;
            continue;
        }
        report.written += 1;
        let f = encoder.encode_video(s)?;
        let (t, d) = f.tokens.dim();
        let rec = write_payload(dir, &s.id, RecordKind::Visual, t, d, encode_f32(f.tokens.iter().copied()))?;
        fresh.push(rec);
    }
    for attr in schema.attributes() {
        for cat in &attr.categories {
            let id = text_id(&attr.name, cat);
            if present(&id)? {
                report.text_skipped += 1;
                continue;
            }
            report.text_written += 1;
            let f = encoder.encode_text(&attr.name, cat)?;
            let rec = write_payload(dir, &id, RecordKind::Text, 1, f.vector.len(), encode_f32(f.vector.iter().copied()))?;
            fresh.push(rec);
        }
    }
    if fresh.is_empty() && records.contains_key("meta") {
        return Ok(report);
    }
    for rec in fresh {
        records.insert(rec.id.clone(), rec);
    }
    records.insert(
        "meta".to_string(),
        IndexRecord {
            id: "meta".to_string(),
            kind: RecordKind::Meta,
            t: 0,
            d: encoder.width(),
            file: String::new(),
            sha256: String::new(),
            template: Some(TEXT_TEMPLATE.to_string()),
        },
    );
    let mut index = Vec::new();
    // meta first, then everything else in id order
    let meta = records.remove("meta").expect("inserted above");
    for rec in std::iter::once(&meta).chain(records.values()) {
        writeln!(index, "{}", serde_json::to_string(rec).expect("record serializes"))
            .expect("vec write");
    }
    crate::write_atomic(&dir.join(INDEX_FILE), &index)?;
    Ok(report)
}

/// Serves features out of a cache directory.
#[derive(Debug, Clone)]
pub struct CachedEncoder {
    cache: FeatureCache,
    width: usize,
}

impl CachedEncoder {
    pub fn new(cache: FeatureCache, width: usize) -> Self {
        Self { cache, width }
    }
}

impl Encoder for CachedEncoder {
    fn width(&self) -> usize {
        self.width
    }

    fn encode_video(&self, sample: &VideoSample) -> Result<VisualFeature> {
        let f = self.cache.load_visual(&sample.id)?;
        if f.width() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                found: f.width(),
            });
        }
        Ok(f)
    }

    fn encode_text(&self, attribute: &str, category: &str) -> Result<TextFeature> {
        let f = self.cache.load_text(attribute, category)?;
        if f.vector.len() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                found: f.vector.len(),
            });
        }
        Ok(f)
    }
}
