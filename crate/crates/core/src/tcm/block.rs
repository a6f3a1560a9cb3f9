//! Adaptive attribute block: one pre-norm transformer encoder layer applied
//! to the support-category text tokens. No positional encoding, so the
//! block is equivariant to the order of the categories.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::attention::{self, AttentionCache};
use super::TcmWeights;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044_715;

pub(crate) struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: ArrayView2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = &x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Array2<f64>,
    dy: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = dy.ncols() as f64;
    let dgain = (&dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = &dy * gain;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - &mean_dxhat.view().insert_axis(Axis(1))
        - &cache.xhat * &mean_dxhat_xhat.view().insert_axis(Axis(1));
    dx *= &cache.inv_std.view().insert_axis(Axis(1));
    (dx, dgain, dbias)
}

fn gelu(u: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * u * (1.0 + (k * (u + GELU_C * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let th = (k * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * k * (1.0 + 3.0 * GELU_C * u * u)
}

pub(crate) struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ctx: Array2<f64>,
    ln2: LayerNormCache,
    h2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

/// `x1 = x + MHA(LN1(x)) W_o`, `out = x1 + GELU(LN2(x1) W_1 + b_1) W_2 + b_2`.
pub(crate) fn forward(w: &TcmWeights, heads: usize, x: ArrayView2<f64>) -> (Array2<f64>, BlockCache) {
    let (h1, ln1) = layer_norm(x, &w.g_ln1_gain, &w.g_ln1_bias);
    let (ctx, attn) = attention::forward(h1.view(), h1.view(), &w.g_wq, &w.g_wk, &w.g_wv, heads);
    let x1 = &x + &ctx.dot(&w.g_wo);
    let (h2, ln2) = layer_norm(x1.view(), &w.g_ln2_gain, &w.g_ln2_bias);
    let pre_act = h2.dot(&w.g_ffn_w1) + &w.g_ffn_b1;
    let act = pre_act.mapv(gelu);
    let out = &x1 + &(act.dot(&w.g_ffn_w2) + &w.g_ffn_b2);
    let cache = BlockCache {
        ln1,
        attn,
        ctx,
        ln2,
        h2,
        pre_act,
        act,
    };
    (out, cache)
}

/// Accumulates parameter gradients into `grads`; returns `d x`.
pub(crate) fn backward(
    w: &TcmWeights,
    cache: &BlockCache,
    d_out: ArrayView2<f64>,
    grads: &mut TcmWeights,
) -> Array2<f64> {
    // feed-forward branch
    grads.g_ffn_w2 += &cache.act.t().dot(&d_out);
    grads.g_ffn_b2 += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_act = d_out.dot(&w.g_ffn_w2.t());
    let d_pre = d_act * &cache.pre_act.mapv(gelu_grad);
    grads.g_ffn_w1 += &cache.h2.t().dot(&d_pre);
    grads.g_ffn_b1 += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_h2 = d_pre.dot(&w.g_ffn_w1.t());
    let (d_x1_ln, dg2, db2) = layer_norm_backward(&cache.ln2, &w.g_ln2_gain, d_h2.view());
    grads.g_ln2_gain += &dg2;
    grads.g_ln2_bias += &db2;
    let d_x1 = &d_out + &d_x1_ln;

    // attention branch
    grads.g_wo += &cache.ctx.t().dot(&d_x1);
    let d_ctx = d_x1.dot(&w.g_wo.t());
    let ag = attention::backward(&cache.attn, &w.g_wq, &w.g_wk, &w.g_wv, d_ctx.view());
    grads.g_wq += &ag.d_wq;
    grads.g_wk += &ag.d_wk;
    grads.g_wv += &ag.d_wv;
    let d_h1 = ag.d_q_in + ag.d_kv_in;
    let (d_x_ln, dg1, db1) = layer_norm_backward(&cache.ln1, &w.g_ln1_gain, d_h1.view());
    grads.g_ln1_gain += &dg1;
    grads.g_ln1_bias += &db1;
    &d_x1 + &d_x_ln
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for u in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }
}
