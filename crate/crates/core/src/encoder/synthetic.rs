//! Deterministic stand-in for a frozen vision-language backbone.
//!
//! Every (attribute, category) owns a unit basis vector `u`. A frame of a
//! video with labels `{A_i: c_i}` is
//!
//! ```text
//! frame_f = normalize( Σ_i w_i · u(A_i, c_i) + drift_f + ε_f )
//! ```
//!
//! where `drift_f` is a Gaussian random walk over frames and `ε_f` is i.i.d.
//! Gaussian noise. Label text is `normalize(u + η)` with a fixed perturbation.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{finalize_rows, finalize_vector, Encoder, TextFeature, VisualFeature};
use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, VideoSample};
use crate::seed::{self, Rng};

/// Largest |cos| tolerated between two distinct basis vectors.
pub const BASIS_COS_BOUND: f64 = 0.3;
const MAX_BASIS_DRAWS: usize = 2_000_000;

const SALT_BASIS: u64 = 0xBA515;
const SALT_VIDEO: u64 = 0x71DE0;
const SALT_TEXT: u64 = 0x7E47;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEncoderConfig {
    pub d: usize,
    pub t: usize,
    pub basis_seed: u64,
    pub noise_std: f64,
    pub drift_std: f64,
    pub text_noise_std: f64,
    /// Mixing weight per attribute; attributes not listed weigh 1.0.
    pub attribute_weights: BTreeMap<String, f64>,
}

impl Default for SyntheticEncoderConfig {
    fn default() -> Self {
        Self {
            d: 64,
            t: 8,
            basis_seed: 0,
            noise_std: 0.05,
            drift_std: 0.02,
            text_noise_std: 0.05,
            attribute_weights: BTreeMap::new(),
        }
    }
}

impl SyntheticEncoderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.d == 0 {
            errs.push("encoder.d must be positive".to_string());
        }
        if self.t == 0 {
            errs.push("encoder.t must be positive".to_string());
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("drift_std", self.drift_std),
            ("text_noise_std", self.text_noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("encoder.{name} must be a non-negative number, got {v}"));
            }
        }
        for (attr, w) in &self.attribute_weights {
            if !(*w > 0.0 && w.is_finite()) {
                errs.push(format!("encoder.attribute_weights.{attr} must be positive, got {w}"));
            }
        }
        errs
    }

    pub fn weight(&self, attribute: &str) -> f64 {
        self.attribute_weights.get(attribute).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    config: SyntheticEncoderConfig,
    basis: HashMap<String, Vec<Array1<f64>>>,
    index: HashMap<String, HashMap<String, usize>>,
}

impl SyntheticEncoder {
    pub fn new(config: SyntheticEncoderConfig, schema: &AttributeSchema) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let mut rng = seed::stream(seed::derive(config.basis_seed, SALT_BASIS), 0);
        let mut accepted: Vec<Array1<f64>> = Vec::new();
        let mut basis = HashMap::new();
        let mut index = HashMap::new();
        let mut draws = 0usize;
        for attr in schema.attributes() {
            let mut vectors = Vec::with_capacity(attr.categories.len());
            for _ in &attr.categories {
                let v = loop {
                    draws += 1;
                    if draws > MAX_BASIS_DRAWS {
                        return Err(Error::BasisConstruction {
                            bound: BASIS_COS_BOUND,
                            attempts: MAX_BASIS_DRAWS,
                        });
                    }
                    let mut v = gaussian(&mut rng, config.d, 1.0);
                    let n = v.dot(&v).sqrt();
                    v /= n;
                    if accepted.iter().all(|u| u.dot(&v).abs() < BASIS_COS_BOUND) {
                        break v;
                    }
                };
                accepted.push(v.clone());
                vectors.push(v);
            }
            index.insert(
                attr.name.clone(),
                attr.categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.clone(), i))
                    .collect(),
            );
            basis.insert(attr.name.clone(), vectors);
        }
        Ok(Self {
            config,
            basis,
            index,
        })
    }

    pub fn config(&self) -> &SyntheticEncoderConfig {
        &self.config
    }

    pub fn basis(&self, attribute: &str, category: &str) -> Result<&Array1<f64>> {
        self.index
            .get(attribute)
            .and_then(|m| m.get(category))
            .map(|&i| &self.basis[attribute][i])
            .ok_or_else(|| Error::UnknownCategory {
                attribute: attribute.to_string(),
                category: category.to_string(),
            })
    }

    /// Noise-free signal `Σ_i w_i u(A_i, c_i)` for a label set.
    pub fn signal(&self, sample: &VideoSample) -> Result<Array1<f64>> {
        let mut s = Array1::zeros(self.config.d);
        for (attr, cat) in &sample.labels {
            s.scaled_add(self.config.weight(attr), self.basis(attr, cat)?);
        }
        Ok(s)
    }

    /// Variance per coordinate of the perturbation added to frame `f`.
    pub fn frame_variance(&self, f: usize) -> f64 {
        self.config.noise_std.powi(2) + (f as f64 + 1.0) * self.config.drift_std.powi(2)
    }
}

fn gaussian(rng: &mut Rng, d: usize, std: f64) -> Array1<f64> {
    Array1::from_iter((0..d).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    }))
}

impl Encoder for SyntheticEncoder {
    fn width(&self) -> usize {
        self.config.d
    }

    fn encode_video(&self, sample: &VideoSample) -> Result<VisualFeature> {
        let signal = self.signal(sample)?;
        let cfg = &self.config;
        let mut rng = seed::keyed(seed::derive(cfg.basis_seed, SALT_VIDEO), &sample.id);
        let mut drift = Array1::<f64>::zeros(cfg.d);
        let mut tokens = Array2::zeros((cfg.t, cfg.d));
        for mut row in tokens.rows_mut() {
            drift += &gaussian(&mut rng, cfg.d, cfg.drift_std);
            let noise = gaussian(&mut rng, cfg.d, cfg.noise_std);
            row.assign(&(&signal + &drift + &noise));
        }
        finalize_rows(&mut tokens);
        Ok(VisualFeature {
            sample_id: sample.id.clone(),
            tokens,
        })
    }

    fn encode_text(&self, attribute: &str, category: &str) -> Result<TextFeature> {
        let u = self.basis(attribute, category)?;
        let mut rng = seed::keyed(
            seed::derive(self.config.basis_seed, SALT_TEXT),
            &format!("{attribute}\u{1f}{category}"),
        );
        let mut v = u + &gaussian(&mut rng, self.config.d, self.config.text_noise_std);
        finalize_vector(&mut v);
        Ok(TextFeature {
            attribute: attribute.to_string(),
            category: category.to_string(),
            vector: v,
        })
    }
}
