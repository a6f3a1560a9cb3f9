use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::align::{alignment_distance, alignment_distance_grad, AlignConfig};
use crate::encoder::FeatureBank;
use crate::error::{Error, Result};
use crate::schema::Episode;
use crate::tcm::{self, TcmParams, TcmWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrototypeMode {
    /// Average the K constrained shots, then align the query to the mean.
    MeanThenAlign,
    /// Align the query to every shot and average the distances.
    AlignThenMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub align: AlignConfig,
    pub temperature: f64,
    pub prototype: PrototypeMode,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            align: AlignConfig::default(),
            temperature: 1.0,
            prototype: PrototypeMode::MeanThenAlign,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Aapm,
    FrozenBaseline,
    TextConcat,
}

/// A classifier ready to score episodes.
#[derive(Debug, Clone)]
pub enum Model {
    Aapm(TcmParams),
    /// Prototypes straight from the frozen features.
    FrozenBaseline,
    /// Frozen features with label text appended as an extra frame: each
    /// support video gets its category's text, each query the mean text of
    /// the episode's categories.
    TextConcat,
}

impl Model {
    pub fn variant(&self) -> ModelVariant {
        match self {
            Model::Aapm(_) => ModelVariant::Aapm,
            Model::FrozenBaseline => ModelVariant::FrozenBaseline,
            Model::TextConcat => ModelVariant::TextConcat,
        }
    }
}

/// Episode with its features resolved. Query labels sit apart from the
/// query features so that no scoring path can read them.
#[derive(Debug, Clone)]
pub struct EpisodeBatch<'a> {
    pub attribute: String,
    pub categories: Vec<String>,
    /// `N × d` text features of the support categories.
    pub text: Array2<f64>,
    pub support: Vec<Vec<&'a Array2<f64>>>,
    pub queries: Vec<&'a Array2<f64>>,
    pub labels: Vec<usize>,
}

impl<'a> EpisodeBatch<'a> {
    pub fn resolve(episode: &Episode, bank: &'a FeatureBank) -> Result<Self> {
        let texts = episode
            .categories
            .iter()
            .map(|c| bank.text(&episode.attribute, c))
            .collect::<Result<Vec<_>>>()?;
        let text = tcm::stack_text(&texts, bank.width())?;
        let support = episode
            .support
            .iter()
            .map(|ids| ids.iter().map(|id| bank.visual(id).map(|f| &f.tokens)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let queries = episode
            .query
            .iter()
            .map(|(id, _)| bank.visual(id).map(|f| &f.tokens))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            attribute: episode.attribute.clone(),
            categories: episode.categories.clone(),
            text,
            support,
            queries,
            labels: episode.query.iter().map(|(_, n)| *n).collect(),
        })
    }

    pub fn way(&self) -> usize {
        self.support.len()
    }
}

/// Per-category `t × d` prototypes, in episode category order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub attribute: String,
    pub categories: Vec<String>,
    pub prototypes: Vec<Array2<f64>>,
}

fn mean_of(shots: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = shots.first().ok_or(Error::RaggedSupport)?;
    let mut acc = Array2::zeros(first.raw_dim());
    for s in shots {
        if s.dim() != first.dim() {
            return Err(Error::WidthMismatch {
                expected: first.ncols(),
                found: s.ncols(),
            });
        }
        acc += s;
    }
    Ok(acc / shots.len() as f64)
}

/// Frame-wise mean of the K shots of each category.
pub fn build_prototypes(
    attribute: &str,
    categories: &[String],
    support: &[Vec<Array2<f64>>],
) -> Result<PrototypeSet> {
    let k = support.first().map(Vec::len).unwrap_or(0);
    if k == 0 || support.iter().any(|s| s.len() != k) || categories.len() != support.len() {
        return Err(Error::RaggedSupport);
    }
    Ok(PrototypeSet {
        attribute: attribute.to_string(),
        categories: categories.to_vec(),
        prototypes: support.iter().map(|s| mean_of(s)).collect::<Result<_>>()?,
    })
}

fn softmax_neg(dists: &[f64], temperature: f64) -> Array1<f64> {
    let logits: Vec<f64> = dists.iter().map(|d| -d / temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Array1::from_iter(exps.into_iter().map(|e| e / sum))
}

/// Probability over the N prototypes for one query.
pub fn classify(query: ArrayView2<f64>, protos: &PrototypeSet, config: &ClassifierConfig) -> Result<Array1<f64>> {
    let dists = protos
        .prototypes
        .iter()
        .map(|p| alignment_distance(query, p.view(), &config.align))
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax_neg(&dists, config.temperature))
}

/// Appends text rows after the frames.
fn with_text_frame(frames: &Array2<f64>, text: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(0), &[frames.view(), text]).expect("widths agree")
}

struct Distances {
    /// `dists[q][n]`
    dists: Vec<Vec<f64>>,
}

fn distances_frozen(batch: &EpisodeBatch, config: &ClassifierConfig, concat: bool) -> Result<Distances> {
    let text_rows = |n: usize| batch.text.slice(ndarray::s![n..n + 1, ..]).to_owned();
    let mean_text = batch.text.mean_axis(Axis(0)).expect("N ≥ 1").insert_axis(Axis(0));
    let support: Vec<Vec<Array2<f64>>> = batch
        .support
        .iter()
        .enumerate()
        .map(|(n, shots)| {
            shots
                .iter()
                .map(|s| {
                    if concat {
                        with_text_frame(s, text_rows(n).view())
                    } else {
                        (*s).clone()
                    }
                })
                .collect()
        })
        .collect();
    let queries: Vec<Array2<f64>> = batch
        .queries
        .iter()
        .map(|q| if concat { with_text_frame(q, mean_text.view()) } else { (*q).clone() })
        .collect();
    distances_from(&batch.attribute, &batch.categories, &support, &queries, config)
}

fn distances_from(
    attribute: &str,
    categories: &[String],
    support: &[Vec<Array2<f64>>],
    queries: &[Array2<f64>],
    config: &ClassifierConfig,
) -> Result<Distances> {
    let dists = match config.prototype {
        crate::fewshot::PrototypeMode::MeanThenAlign => {
            let protos = build_prototypes(attribute, categories, support)?;
            queries
                .iter()
                .map(|q| {
                    protos
                        .prototypes
                        .iter()
                        .map(|p| alignment_distance(q.view(), p.view(), &config.align))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
        crate::fewshot::PrototypeMode::AlignThenMean => queries
            .iter()
            .map(|q| {
                support
                    .iter()
                    .map(|shots| {
                        let total = shots
                            .iter()
                            .map(|s| alignment_distance(q.view(), s.view(), &config.align))
                            .sum::<Result<f64>>()?;
                        Ok(total / shots.len() as f64)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Distances { dists })
}

impl Model {
    /// Class probabilities for every query of the batch.
    pub fn predict(&self, batch: &EpisodeBatch, config: &ClassifierConfig) -> Result<Vec<Array1<f64>>> {
        let d = match self {
            Model::FrozenBaseline => distances_frozen(batch, config, false)?,
            Model::TextConcat => distances_frozen(batch, config, true)?,
            Model::Aapm(params) => {
                let (space, _) = tcm::attribute_space_forward(params, batch.text.view());
                let support = batch
                    .support
                    .iter()
                    .map(|shots| {
                        shots
                            .iter()
                            .map(|s| tcm::constrain_forward(params, space.view(), s.view()).map(|(o, _)| o))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let queries = batch
                    .queries
                    .iter()
                    .map(|q| tcm::constrain_forward(params, space.view(), q.view()).map(|(o, _)| o))
                    .collect::<Result<Vec<_>>>()?;
                distances_from(&batch.attribute, &batch.categories, &support, &queries, config)?
            }
        };
        Ok(d.dists.iter().map(|row| softmax_neg(row, config.temperature)).collect())
    }
}

fn cross_entropy(probs: &[Array1<f64>], labels: &[usize]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}

/// Mean cross-entropy of the batch under `model`.
pub fn episode_loss(model: &Model, batch: &EpisodeBatch, config: &ClassifierConfig) -> Result<f64> {
    let probs = model.predict(batch, config)?;
    Ok(cross_entropy(&probs, &batch.labels))
}

/// Loss and its gradient with respect to every TCM weight, through the
/// whole chain: attribute block, cross-attention, prototypes, soft-DTW,
/// softmax and cross-entropy.
pub fn episode_loss_grad(params: &TcmParams, batch: &EpisodeBatch, config: &ClassifierConfig) -> Result<(f64, TcmWeights)> {
    let mut grads = params.zero_gradients();
    let (space, space_tape) = tcm::attribute_space_forward(params, batch.text.view());

    let mut support_out = Vec::with_capacity(batch.way());
    let mut support_tapes = Vec::with_capacity(batch.way());
    for shots in &batch.support {
        let mut outs = Vec::with_capacity(shots.len());
        let mut tapes = Vec::with_capacity(shots.len());
        for s in shots {
            let (o, t) = tcm::constrain_forward(params, space.view(), s.view())?;
            outs.push(o);
            tapes.push(t);
        }
        support_out.push(outs);
        support_tapes.push(tapes);
    }
    let k = support_out.first().map(Vec::len).unwrap_or(0);
    if k == 0 || support_out.iter().any(|s| s.len() != k) {
        return Err(Error::RaggedSupport);
    }

    // adjoints of the constrained support shots
    let mut d_support: Vec<Vec<Array2<f64>>> = support_out
        .iter()
        .map(|shots| shots.iter().map(|s| Array2::zeros(s.raw_dim())).collect())
        .collect();
    let protos = match config.prototype {
        PrototypeMode::MeanThenAlign => Some(
            support_out
                .iter()
                .map(|shots| mean_of(shots))
                .collect::<Result<Vec<_>>>()?,
        ),
        PrototypeMode::AlignThenMean => None,
    };

    let q_count = batch.queries.len() as f64;
    let tau = config.temperature;
    let mut loss = 0.0;
    let mut d_space = Array2::zeros(space.raw_dim());
    for (q, &label) in batch.queries.iter().zip(&batch.labels) {
        let (q_out, q_tape) = tcm::constrain_forward(params, space.view(), q.view())?;
        let mut dists = Vec::with_capacity(batch.way());
        // gradients of dist_n w.r.t. q_out and w.r.t. each support shot
        let mut partials = Vec::with_capacity(batch.way());
        for n in 0..batch.way() {
            match &protos {
                Some(p) => {
                    let (dist, dq, dp) = alignment_distance_grad(q_out.view(), p[n].view(), &config.align)?;
                    dists.push(dist);
                    let per_shot = dp / k as f64;
                    partials.push((dq, vec![per_shot; k]));
                }
                None => {
                    let mut total = 0.0;
                    let mut dq_sum = Array2::zeros(q_out.raw_dim());
                    let mut shots = Vec::with_capacity(k);
                    for s in &support_out[n] {
                        let (dist, dq, ds) = alignment_distance_grad(q_out.view(), s.view(), &config.align)?;
                        total += dist;
                        dq_sum += &dq;
                        shots.push(ds / k as f64);
                    }
                    dists.push(total / k as f64);
                    partials.push((dq_sum / k as f64, shots));
                }
            }
        }
        let p = softmax_neg(&dists, tau);
        loss += -p[label].max(f64::MIN_POSITIVE).ln() / q_count;

        let mut d_q_out = Array2::zeros(q_out.raw_dim());
        for (n, (dq, dshots)) in partials.into_iter().enumerate() {
            let target = if n == label { 1.0 } else { 0.0 };
            // ∂loss/∂dist_n = -(p_n - y_n) / (τ Q)
            let d_dist = -(p[n] - target) / (tau * q_count);
            if d_dist == 0.0 {
                continue;
            }
            d_q_out.scaled_add(d_dist, &dq);
            for (slot, ds) in d_support[n].iter_mut().zip(dshots) {
                slot.scaled_add(d_dist, &ds);
            }
        }
        d_space += &tcm::constrain_backward(params, &q_tape, d_q_out.view(), &mut grads);
    }
    for (tapes, adjs) in support_tapes.iter().zip(&d_support) {
        for (tape, adj) in tapes.iter().zip(adjs) {
            d_space += &tcm::constrain_backward(params, tape, adj.view(), &mut grads);
        }
    }
    tcm::attribute_space_backward(params, &space_tape, d_space.view(), &mut grads);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn prototypes_average_shots() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let y = array![[3.0, 0.0], [1.0, 0.0]];
        let cats = vec!["a".to_string()];
        let set = build_prototypes("attr", &cats, &[vec![x.clone()]]).unwrap();
        assert_eq!(set.prototypes[0], x);
        let set = build_prototypes("attr", &cats, &[vec![x.clone(), x.clone(), x.clone()]]).unwrap();
        assert_eq!(set.prototypes[0], x);
        let set = build_prototypes("attr", &cats, &[vec![x.clone(), y.clone()]]).unwrap();
        for ((i, j), v) in set.prototypes[0].indexed_iter() {
            assert_eq!(*v, (x[(i, j)] + y[(i, j)]) / 2.0);
        }
    }

    #[test]
    fn ragged_support_is_rejected() {
        let x = array![[1.0, 2.0]];
        let cats = vec!["a".to_string(), "b".to_string()];
        let err = build_prototypes("attr", &cats, &[vec![x.clone()], vec![x.clone(), x.clone()]]);
        assert!(matches!(err, Err(Error::RaggedSupport)));
    }

    #[test]
    fn uniform_distances_give_log_way() {
        let probs = vec![softmax_neg(&[0.7; 5], 1.0)];
        assert!((cross_entropy(&probs, &[3]) - 5f64.ln()).abs() < 1e-12);
    }
}
