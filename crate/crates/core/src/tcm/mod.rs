//! Text-Constrain Module.
//!
//! The support set's category text features pass through the adaptive
//! attribute block to form a latent attribute space; that space then steers
//! a cross-attention over each video's frames. The attention output is added
//! back onto the frames through `W_o`, so a zero `W_o` leaves the frozen
//! visual features untouched.

mod attention;
mod block;
pub mod checkpoint;

use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::{TextFeature, VisualFeature};
use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};

/// How the latent attribute space is combined with the frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstrainVariant {
    /// Attribute tokens query the frames; the `N` context rows are
    /// mean-pooled and added to every frame.
    PooledContext,
    /// Frames query the attribute tokens; each frame receives its own
    /// context row.
    FrameQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcmConfig {
    pub d: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub variant: ConstrainVariant,
    pub seed: u64,
    /// Std of the otherwise-zero output projections. Only the chance-level
    /// sanity check sets this.
    pub output_init_std: f64,
    /// When positive, cross-attention starts as `W_q = W_k = gain·I`,
    /// `W_v = I` instead of random projections.
    pub attention_gain: f64,
}

impl Default for TcmConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            ffn_width: 128,
            variant: ConstrainVariant::FrameQuery,
            seed: 0,
            output_init_std: 0.0,
            attention_gain: 0.0,
        }
    }
}

impl TcmConfig {
    pub fn with_width(d: usize) -> Self {
        let heads = if d >= 512 { 8 } else if d % 4 == 0 { 4 } else { 1 };
        Self {
            d,
            heads,
            ffn_width: 2 * d,
            ..Self::default()
        }
    }

    pub fn key_width(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.d == 0 || self.heads == 0 || self.ffn_width == 0 {
            errs.push("model.d, model.heads and model.ffn_width must be positive".to_string());
        } else if self.d % self.heads != 0 {
            errs.push(format!("model.heads = {} does not divide d = {}", self.heads, self.d));
        }
        if !(self.output_init_std >= 0.0 && self.output_init_std.is_finite()) {
            errs.push("model.output_init_std must be non-negative".to_string());
        }
        if !(self.attention_gain >= 0.0 && self.attention_gain.is_finite()) {
            errs.push("model.attention_gain must be non-negative".to_string());
        }
        errs
    }
}

macro_rules! weights {
    ($($(#[$doc:meta])* $name:ident),* $(,)?) => {
        /// Trainable tensors of the module. Vectors are stored as `1 × n`.
        /// The same layout doubles as the gradient container.
        #[derive(Debug, Clone, PartialEq)]
        pub struct TcmWeights {
            $($(#[$doc])* pub $name: Array2<f64>,)*
        }

        impl TcmWeights {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn blocks(&self) -> Vec<(&'static str, &Array2<f64>)> {
                vec![$((stringify!($name), &self.$name)),*]
            }

            pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
                vec![$((stringify!($name), &mut self.$name)),*]
            }

            pub fn zeros_like(other: &Self) -> Self {
                Self { $($name: Array2::zeros(other.$name.raw_dim()),)* }
            }
        }
    };
}

weights! {
    g_ln1_gain,
    g_ln1_bias,
    g_wq,
    g_wk,
    g_wv,
    /// Residual output of the self-attention branch; zero at init.
    g_wo,
    g_ln2_gain,
    g_ln2_bias,
    g_ffn_w1,
    g_ffn_b1,
    /// Residual output of the feed-forward branch; zero at init.
    g_ffn_w2,
    g_ffn_b2,
    x_wq,
    x_wk,
    x_wv,
    /// Cross-attention output projection; zero at init.
    x_wo,
}

impl TcmWeights {
    pub fn scalar_count(&self) -> usize {
        self.blocks().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn is_finite(&self) -> std::result::Result<(), &'static str> {
        for (name, a) in self.blocks() {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(name);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcmParams {
    pub config: TcmConfig,
    pub weights: TcmWeights,
}

impl TcmParams {
    pub fn init(config: TcmConfig) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::InvalidModel(errs.join("; ")));
        }
        let (d, f) = (config.d, config.ffn_width);
        let mut rng = seed::stream(seed::derive(config.seed, 0x7C3), 0);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
        };
        let proj = 1.0 / (d as f64).sqrt();
        let out = config.output_init_std;
        let mut weights = TcmWeights {
            g_ln1_gain: Array2::ones((1, d)),
            g_ln1_bias: Array2::zeros((1, d)),
            g_wq: normal(d, d, proj),
            g_wk: normal(d, d, proj),
            g_wv: normal(d, d, proj),
            g_wo: normal(d, d, out),
            g_ln2_gain: Array2::ones((1, d)),
            g_ln2_bias: Array2::zeros((1, d)),
            g_ffn_w1: normal(d, f, proj),
            g_ffn_b1: Array2::zeros((1, f)),
            g_ffn_w2: normal(f, d, out),
            g_ffn_b2: Array2::zeros((1, d)),
            x_wq: normal(d, d, proj),
            x_wk: normal(d, d, proj),
            x_wv: normal(d, d, proj),
            x_wo: normal(d, d, out),
        };
        if config.attention_gain > 0.0 {
            let eye = Array2::<f64>::eye(d);
            weights.x_wq = &eye * config.attention_gain;
            weights.x_wk = &eye * config.attention_gain;
            weights.x_wv = eye;
        }
        Ok(Self { config, weights })
    }

    pub fn zero_gradients(&self) -> TcmWeights {
        TcmWeights::zeros_like(&self.weights)
    }
}

/// `N × d` tokens, one per support category, in episode order.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentAttributeSpace {
    pub attribute: String,
    pub tokens: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Support,
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedFeature {
    pub tokens: Array2<f64>,
    pub role: Role,
    pub category: Option<String>,
}

/// Stacks text features into an `N × d` matrix after checking they share an
/// attribute and width.
pub fn stack_text(text: &[&TextFeature], d: usize) -> Result<Array2<f64>> {
    let first = text
        .first()
        .ok_or_else(|| Error::InvalidModel("no text features".into()))?;
    let mut m = Array2::zeros((text.len(), d));
    for (i, t) in text.iter().enumerate() {
        if t.attribute != first.attribute {
            return Err(Error::MixedAttributes(first.attribute.clone(), t.attribute.clone()));
        }
        if t.vector.len() != d {
            return Err(Error::WidthMismatch {
                expected: d,
                found: t.vector.len(),
            });
        }
        m.row_mut(i).assign(&t.vector);
    }
    Ok(m)
}

pub fn build_attribute_space(text: &[&TextFeature], params: &TcmParams) -> Result<LatentAttributeSpace> {
    if text.len() < 2 {
        return Err(Error::InvalidModel("an attribute space needs at least 2 categories".into()));
    }
    let x = stack_text(text, params.config.d)?;
    let (tokens, _) = block::forward(&params.weights, params.config.heads, x.view());
    Ok(LatentAttributeSpace {
        attribute: text[0].attribute.clone(),
        tokens,
    })
}

/// Forward state of the attribute block kept for backpropagation.
pub struct SpaceTape {
    cache: block::BlockCache,
}

pub fn attribute_space_forward(params: &TcmParams, text: ArrayView2<f64>) -> (Array2<f64>, SpaceTape) {
    let (out, cache) = block::forward(&params.weights, params.config.heads, text);
    (out, SpaceTape { cache })
}

/// Accumulates block gradients; returns the text-feature adjoint.
pub fn attribute_space_backward(
    params: &TcmParams,
    tape: &SpaceTape,
    d_space: ArrayView2<f64>,
    grads: &mut TcmWeights,
) -> Array2<f64> {
    block::backward(&params.weights, &tape.cache, d_space, grads)
}

/// Forward state of one constrain call.
pub struct ConstrainTape {
    attn: attention::AttentionCache,
    /// Pooled context (`1 × d`) or per-frame context (`t × d`).
    context: Array2<f64>,
    variant: ConstrainVariant,
    n_space: usize,
}

impl ConstrainTape {
    /// Attention matrices per head (rows sum to 1).
    pub fn attention(&self) -> &[Array2<f64>] {
        &self.attn.probs
    }
}

pub fn constrain_forward(
    params: &TcmParams,
    space: ArrayView2<f64>,
    frames: ArrayView2<f64>,
) -> Result<(Array2<f64>, ConstrainTape)> {
    let d = params.config.d;
    for found in [space.ncols(), frames.ncols()] {
        if found != d {
            return Err(Error::WidthMismatch { expected: d, found });
        }
    }
    let w = &params.weights;
    let heads = params.config.heads;
    let (out, tape) = match params.config.variant {
        ConstrainVariant::PooledContext => {
            let (ctx, attn) = attention::forward(space, frames, &w.x_wq, &w.x_wk, &w.x_wv, heads);
            let pooled = ctx.mean_axis(Axis(0)).expect("N ≥ 1").insert_axis(Axis(0));
            let out = &frames + &pooled.dot(&w.x_wo);
            (out, ConstrainTape { attn, context: pooled, variant: ConstrainVariant::PooledContext, n_space: space.nrows() })
        }
        ConstrainVariant::FrameQuery => {
            let (ctx, attn) = attention::forward(frames, space, &w.x_wq, &w.x_wk, &w.x_wv, heads);
            let out = &frames + &ctx.dot(&w.x_wo);
            (out, ConstrainTape { attn, context: ctx, variant: ConstrainVariant::FrameQuery, n_space: space.nrows() })
        }
    };
    Ok((out, tape))
}

/// Accumulates cross-attention gradients; returns the adjoint of the
/// attribute space. Frame adjoints are dropped because the encoder is frozen.
pub fn constrain_backward(
    params: &TcmParams,
    tape: &ConstrainTape,
    d_out: ArrayView2<f64>,
    grads: &mut TcmWeights,
) -> Array2<f64> {
    let w = &params.weights;
    match tape.variant {
        ConstrainVariant::PooledContext => {
            let d_inj = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
            grads.x_wo += &tape.context.t().dot(&d_inj);
            let d_pooled = d_inj.dot(&w.x_wo.t()) / tape.n_space as f64;
            let d_ctx = Array2::from_shape_fn((tape.n_space, d_pooled.ncols()), |(_, k)| d_pooled[(0, k)]);
            let ag = attention::backward(&tape.attn, &w.x_wq, &w.x_wk, &w.x_wv, d_ctx.view());
            grads.x_wq += &ag.d_wq;
            grads.x_wk += &ag.d_wk;
            grads.x_wv += &ag.d_wv;
            ag.d_q_in
        }
        ConstrainVariant::FrameQuery => {
            grads.x_wo += &tape.context.t().dot(&d_out);
            let d_ctx = d_out.dot(&w.x_wo.t());
            let ag = attention::backward(&tape.attn, &w.x_wq, &w.x_wk, &w.x_wv, d_ctx.view());
            grads.x_wq += &ag.d_wq;
            grads.x_wk += &ag.d_wk;
            grads.x_wv += &ag.d_wv;
            ag.d_kv_in
        }
    }
}

/// Constrains one video under an attribute space. The signature carries no
/// label of the video itself.
pub fn constrain(
    space: &LatentAttributeSpace,
    visual: &VisualFeature,
    params: &TcmParams,
    role: Role,
    category: Option<String>,
) -> Result<ConstrainedFeature> {
    let (tokens, _) = constrain_forward(params, space.tokens.view(), visual.tokens.view())?;
    Ok(ConstrainedFeature {
        tokens,
        role,
        category,
    })
}
