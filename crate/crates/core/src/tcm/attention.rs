//! Multi-head scaled dot-product attention with an explicit backward pass.

use ndarray::{s, Array2, ArrayView2, Axis};

pub(crate) struct AttentionCache {
    q_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Row-stochastic attention matrix per head, `n_q × n_kv`.
    pub probs: Vec<Array2<f64>>,
    heads: usize,
}

pub(crate) struct AttentionGrads {
    pub d_q_in: Array2<f64>,
    pub d_kv_in: Array2<f64>,
    pub d_wq: Array2<f64>,
    pub d_wk: Array2<f64>,
    pub d_wv: Array2<f64>,
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub(crate) fn forward(
    q_in: ArrayView2<f64>,
    kv_in: ArrayView2<f64>,
    wq: &Array2<f64>,
    wk: &Array2<f64>,
    wv: &Array2<f64>,
    heads: usize,
) -> (Array2<f64>, AttentionCache) {
    let q = q_in.dot(wq);
    let k = kv_in.dot(wk);
    let v = kv_in.dot(wv);
    let width = q.ncols();
    let dk = width / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut ctx = Array2::zeros((q.nrows(), width));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut p);
        ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let cache = AttentionCache {
        q_in: q_in.to_owned(),
        kv_in: kv_in.to_owned(),
        q,
        k,
        v,
        probs,
        heads,
    };
    (ctx, cache)
}

pub(crate) fn backward(
    cache: &AttentionCache,
    wq: &Array2<f64>,
    wk: &Array2<f64>,
    wv: &Array2<f64>,
    d_ctx: ArrayView2<f64>,
) -> AttentionGrads {
    let width = cache.q.ncols();
    let dk = width / cache.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dkm = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dk..(h + 1) * dk];
        let dc = d_ctx.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&dc));
        let dp = dc.dot(&cache.v.slice(cols).t());
        let inner = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = p * &(&dp - &inner) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dkm.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    AttentionGrads {
        d_q_in: dq.dot(&wq.t()),
        d_kv_in: dkm.dot(&wk.t()) + dv.dot(&wv.t()),
        d_wq: cache.q_in.t().dot(&dq),
        d_wk: cache.kv_in.t().dot(&dkm),
        d_wv: cache.kv_in.t().dot(&dv),
    }
}
