//! Frozen feature extraction boundary.
//!
//! Encoders are pure functions of their construction parameters: nothing in
//! here is trainable. Real backbone features enter through [`cache`].

pub mod cache;
pub mod synthetic;

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, VideoSample};

pub use cache::{cache_features, CacheReport, CachedEncoder, FeatureCache};
pub use synthetic::{SyntheticEncoder, SyntheticEncoderConfig};

/// Per-frame visual embedding, `t × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeature {
    pub sample_id: String,
    pub tokens: Array2<f64>,
}

impl VisualFeature {
    pub fn frames(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Label-text embedding for one (attribute, category).
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeature {
    pub attribute: String,
    pub category: String,
    pub vector: Array1<f64>,
}

pub trait Encoder: Sync {
    fn width(&self) -> usize;
    fn encode_video(&self, sample: &VideoSample) -> Result<VisualFeature>;
    fn encode_text(&self, attribute: &str, category: &str) -> Result<TextFeature>;
}

/// Prompt used when label text is embedded by an external model.
pub const TEXT_TEMPLATE: &str = "a video of {category}";

/// Encoded features for a dataset, keyed by sample id and by
/// (attribute, category).
#[derive(Debug, Clone, Default)]
pub struct FeatureBank {
    width: usize,
    visual: HashMap<String, VisualFeature>,
    text: HashMap<(String, String), TextFeature>,
}

impl FeatureBank {
    pub fn build(encoder: &dyn Encoder, schema: &AttributeSchema, samples: &[VideoSample]) -> Result<Self> {
        let visual = samples
            .par_iter()
            .map(|s| encoder.encode_video(s).map(|f| (s.id.clone(), f)))
            .collect::<Result<HashMap<_, _>>>()?;
        let mut text = HashMap::new();
        for attr in schema.attributes() {
            for cat in &attr.categories {
                let f = encoder.encode_text(&attr.name, cat)?;
                text.insert((attr.name.clone(), cat.clone()), f);
            }
        }
        Ok(Self {
            width: encoder.width(),
            visual,
            text,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn visual(&self, id: &str) -> Result<&VisualFeature> {
        self.visual
            .get(id)
            .ok_or_else(|| Error::SourceUnavailable(id.to_string()))
    }

    pub fn text(&self, attribute: &str, category: &str) -> Result<&TextFeature> {
        self.text
            .get(&(attribute.to_string(), category.to_string()))
            .ok_or_else(|| Error::UnknownCategory {
                attribute: attribute.to_string(),
                category: category.to_string(),
            })
    }

    pub fn insert_visual(&mut self, feature: VisualFeature) {
        self.visual.insert(feature.sample_id.clone(), feature);
    }

    pub fn insert_text(&mut self, feature: TextFeature) {
        self.text
            .insert((feature.attribute.clone(), feature.category.clone()), feature);
    }

    pub fn with_width(width: usize) -> Self {
        Self {
            width,
            ..Self::default()
        }
    }
}

/// Unit-normalizes every row in place, then snaps values to `f32` so that a
/// cache round trip reproduces them bit for bit.
pub(crate) fn finalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        }
        row.mapv_inplace(|x| x as f32 as f64);
    }
}

pub(crate) fn finalize_vector(v: &mut Array1<f64>) {
    let norm = v.dot(v).sqrt();
    if norm > 0.0 {
        v.mapv_inplace(|x| x / norm);
    }
    v.mapv_inplace(|x| x as f32 as f64);
}
