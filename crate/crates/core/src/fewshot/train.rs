use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{episode_loss_grad, ClassifierConfig, EpisodeBatch};
use super::optim::AdamW;
use crate::encoder::FeatureBank;
use crate::error::{Error, Result};
use crate::schema::{EpisodeSampler, Split, SplitAssignment, VideoSample};
use crate::seed;
use crate::tcm::TcmParams;

/// Training-time attribute mixture: attribute → assignment probability.
pub type AttributePolicy = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub way: usize,
    pub shot: usize,
    /// Episodes per optimizer step.
    pub support_batch: usize,
    /// Queries per episode.
    pub query_batch: usize,
    pub seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            epochs: 1,
            episodes_per_epoch: 1000,
            way: 5,
            shot: 1,
            support_batch: 1,
            query_batch: 25,
            seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn episodes(&self) -> usize {
        self.epochs * self.episodes_per_epoch
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!("train.learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            errs.push(format!("train.weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("way", self.way),
            ("shot", self.shot),
            ("support_batch", self.support_batch),
            ("query_batch", self.query_batch),
        ] {
            if v == 0 {
                errs.push(format!("train.{name} must be positive"));
            }
        }
        if !(self.classifier.temperature > 0.0) {
            errs.push("classifier temperature must be positive".to_string());
        }
        if !(self.classifier.align.gamma > 0.0) {
            errs.push("training needs align.gamma > 0".to_string());
        }
        errs
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TcmParams,
    /// `(episode, loss)`.
    pub trace: Vec<(usize, f64)>,
}

impl TrainOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("episode,loss\n");
        for (e, l) in &self.trace {
            out.push_str(&format!("{e},{l}\n"));
        }
        out
    }
}

/// Episodic training. Episode `e` draws its attribute and its task from
/// stream `e` of `config.seed`; one AdamW step follows every
/// `support_batch` episodes.
pub fn train(
    init: TcmParams,
    samples: &[VideoSample],
    split: &SplitAssignment,
    bank: &FeatureBank,
    policy: &AttributePolicy,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(init, samples, split, bank, policy, config, |_, _| Ok(()))
}

/// [`train`] with a hook called after every optimizer step with the number
/// of episodes consumed so far.
pub fn train_observed(
    init: TcmParams,
    samples: &[VideoSample],
    split: &SplitAssignment,
    bank: &FeatureBank,
    policy: &AttributePolicy,
    config: &TrainConfig,
    mut observe: impl FnMut(usize, &TcmParams) -> Result<()>,
) -> Result<TrainOutcome> {
    let errs = config.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let samplers: Vec<(EpisodeSampler, f64)> = policy
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(attr, &p)| (EpisodeSampler::new(samples, split, attr, Split::Train), p))
        .filter(|(s, _)| s.eligible(config.shot).len() >= config.way)
        .collect();
    if samplers.is_empty() {
        return Err(Error::InsufficientCategories {
            attribute: policy.keys().cloned().collect::<Vec<_>>().join(","),
            available: 0,
            needed: config.way,
        });
    }
    let total: f64 = samplers.iter().map(|(_, p)| p).sum();

    let mut params = init;
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut trace = Vec::with_capacity(config.episodes());
    let mut acc = params.zero_gradients();
    let mut pending = 0;
    for e in 0..config.episodes() {
        let mut rng = seed::stream(config.seed, e as u64);
        let mut pick = rng.random::<f64>() * total;
        let sampler = samplers
            .iter()
            .find(|(_, p)| {
                pick -= p;
                pick < 0.0
            })
            .map(|(s, _)| s)
            .unwrap_or(&samplers[samplers.len() - 1].0);
        let episode = sampler.sample(config.way, config.shot, config.query_batch, &mut rng)?;
        let batch = EpisodeBatch::resolve(&episode, bank)?;
        let (loss, grads) = episode_loss_grad(&params, &batch, &config.classifier)?;
        if !loss.is_finite() {
            return Err(Error::DivergedLoss(e));
        }
        if let Err(block) = grads.is_finite() {
            return Err(Error::NonFiniteGradient(block.to_string()));
        }
        trace.push((e, loss));
        for ((_, a), (_, g)) in acc.blocks_mut().into_iter().zip(grads.blocks()) {
            *a += g;
        }
        pending += 1;
        if pending == config.support_batch || e + 1 == config.episodes() {
            if pending > 1 {
                for (_, a) in acc.blocks_mut() {
                    *a /= pending as f64;
                }
            }
            opt.step(&mut params.weights, &acc);
            for (_, a) in acc.blocks_mut() {
                a.fill(0.0);
            }
            pending = 0;
            observe(e + 1, &params)?;
        }
    }
    Ok(TrainOutcome { params, trace })
}
