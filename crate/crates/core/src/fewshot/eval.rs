use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ClassifierConfig, EpisodeBatch, Model};
use crate::encoder::FeatureBank;
use crate::error::Result;
use crate::schema::{EpisodeSampler, Split, SplitAssignment, VideoSample};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub attribute: String,
    pub split: Split,
    pub way: usize,
    pub shot: usize,
    pub queries: usize,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub attribute: String,
    pub way: usize,
    pub shot: usize,
    pub episodes: usize,
    pub accuracy: f64,
    /// 1.96 σ / √episodes over per-episode accuracies.
    pub ci95: f64,
    pub seed: u64,
}

impl AccuracyReport {
    pub fn from_episode_accuracies(spec: &EvalSpec, accs: &[f64]) -> Self {
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let var = if accs.len() > 1 {
            accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            attribute: spec.attribute.clone(),
            way: spec.way,
            shot: spec.shot,
            episodes: accs.len(),
            accuracy: mean,
            ci95: 1.96 * var.sqrt() / n.sqrt(),
            seed: spec.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn argmax(p: &ndarray::Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Per-episode accuracies, episode `e` drawn from stream `e` of
/// `spec.seed`. Episodes run in parallel; the output order is fixed.
pub fn episode_accuracies(
    model: &Model,
    samples: &[VideoSample],
    split: &SplitAssignment,
    bank: &FeatureBank,
    spec: &EvalSpec,
    classifier: &ClassifierConfig,
) -> Result<Vec<f64>> {
    let sampler = EpisodeSampler::new(samples, split, &spec.attribute, spec.split);
    (0..spec.episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = seed::stream(spec.seed, e as u64);
            let episode = sampler.sample(spec.way, spec.shot, spec.queries, &mut rng)?;
            let batch = EpisodeBatch::resolve(&episode, bank)?;
            let probs = model.predict(&batch, classifier)?;
            let correct = probs
                .iter()
                .zip(&batch.labels)
                .filter(|(p, &y)| argmax(p) == y)
                .count();
            Ok(correct as f64 / batch.labels.len() as f64)
        })
        .collect()
}

pub fn evaluate(
    model: &Model,
    samples: &[VideoSample],
    split: &SplitAssignment,
    bank: &FeatureBank,
    spec: &EvalSpec,
    classifier: &ClassifierConfig,
) -> Result<AccuracyReport> {
    let accs = episode_accuracies(model, samples, split, bank, spec, classifier)?;
    Ok(AccuracyReport::from_episode_accuracies(spec, &accs))
}
