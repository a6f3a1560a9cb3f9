//! Prototype alignment distance: frame-level cosine cost, soft-DTW with an
//! optional relaxed support-axis boundary, and its reverse-mode gradient.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Path runs from (1, 1) to (t_q, t_s).
    Strict,
    /// Path may start and end at any support frame; every query frame is
    /// still matched in order.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    SoftDtw,
    /// `1 - cos` of the temporally averaged frames. Baseline only.
    MeanPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub gamma: f64,
    pub boundary: Boundary,
    pub metric: Metric,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            boundary: Boundary::Relaxed,
            metric: Metric::SoftDtw,
        }
    }
}

impl AlignConfig {
    pub fn strict(gamma: f64) -> Self {
        Self {
            gamma,
            boundary: Boundary::Strict,
            metric: Metric::SoftDtw,
        }
    }
}

/// `entries[(i, j)] = 1 - cos(query_i, support_j)`, always in `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCost);
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    /// Debug dump for inspection in a spreadsheet.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(",")).expect("vec write");
        }
        crate::write_atomic(path, &out)
    }
}

fn row_norms(m: ArrayView2<f64>) -> Result<Array1<f64>> {
    let norms = m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroVector(i));
    }
    Ok(norms)
}

pub fn frame_cost(query: ArrayView2<f64>, support: ArrayView2<f64>) -> Result<CostMatrix> {
    if query.ncols() != support.ncols() {
        return Err(Error::WidthMismatch {
            expected: query.ncols(),
            found: support.ncols(),
        });
    }
    let qn = row_norms(query)?;
    let sn = row_norms(support)?;
    let mut c = query.dot(&support.t());
    for ((i, j), v) in c.indexed_iter_mut() {
        let cos = (*v / (qn[i] * sn[j])).clamp(-1.0, 1.0);
        *v = 1.0 - cos;
    }
    CostMatrix::new(c)
}

/// Backpropagates a cost-matrix adjoint onto both frame sequences.
pub fn frame_cost_backward(
    query: ArrayView2<f64>,
    support: ArrayView2<f64>,
    grad_cost: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let qn = row_norms(query)?;
    let sn = row_norms(support)?;
    let qhat = &query / &qn.view().insert_axis(Axis(1));
    let shat = &support / &sn.view().insert_axis(Axis(1));
    let cos = qhat.dot(&shat.t());
    // d cos_ij / d q_i = (ŝ_j - cos_ij q̂_i) / |q_i|, and cost = 1 - cos
    let mut dq = -grad_cost.dot(&shat);
    let gc_cos = (&grad_cost * &cos).sum_axis(Axis(1));
    for i in 0..query.nrows() {
        let mut row = dq.row_mut(i);
        row.scaled_add(gc_cos[i], &qhat.row(i));
        row /= qn[i];
    }
    let mut ds = -grad_cost.t().dot(&qhat);
    let gc_cos_s = (&grad_cost * &cos).sum_axis(Axis(0));
    for j in 0..support.nrows() {
        let mut row = ds.row_mut(j);
        row.scaled_add(gc_cos_s[j], &shat.row(j));
        row /= sn[j];
    }
    Ok((dq, ds))
}

/// `-γ log Σ exp(-x/γ)`, or the plain minimum when `γ = 0`. Also returns
/// the normalized weights `∂softmin/∂x`.
pub fn softmin(values: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights = vec![0.0; values.len()];
    if m == f64::INFINITY {
        return (m, weights);
    }
    if gamma == 0.0 {
        let arg = values.iter().position(|&v| v == m).expect("min is attained");
        weights[arg] = 1.0;
        return (m, weights);
    }
    let mut total = 0.0;
    for (w, &v) in weights.iter_mut().zip(values) {
        *w = (-(v - m) / gamma).exp();
        total += *w;
    }
    for w in &mut weights {
        *w /= total;
    }
    let value = m - gamma * total.ln();
    debug_assert!(value <= m && m <= value + gamma * (values.len() as f64).ln() + 1e-12);
    (value, weights)
}

/// Forward pass with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct SoftDtw {
    pub value: f64,
    /// Accumulated cost, `(t_q + 1) × (t_s + 1)` including the boundary.
    pub accumulated: Array2<f64>,
    /// Softmin weights of cell (i, j) over (up, left, diagonal).
    step_weights: Array3<f64>,
    end_weights: Vec<f64>,
    boundary: Boundary,
}

impl SoftDtw {
    pub fn forward(cost: &CostMatrix, gamma: f64, boundary: Boundary) -> Self {
        assert!(gamma >= 0.0, "gamma must be non-negative");
        let (tq, ts) = cost.dim();
        let mut r = Array2::from_elem((tq + 1, ts + 1), f64::INFINITY);
        match boundary {
            Boundary::Strict => r[(0, 0)] = 0.0,
            // virtual start row, entered only by a vertical step so that
            // each start column is counted once
            Boundary::Relaxed => {
                r.row_mut(0).fill(0.0);
                r[(0, 0)] = f64::INFINITY;
            }
        }
        let mut step_weights = Array3::zeros((tq, ts, 3));
        for i in 1..=tq {
            for j in 1..=ts {
                let diag = if boundary == Boundary::Relaxed && i == 1 {
                    f64::INFINITY
                } else {
                    r[(i - 1, j - 1)]
                };
                let (m, w) = softmin(&[r[(i - 1, j)], r[(i, j - 1)], diag], gamma);
                r[(i, j)] = cost.entries[(i - 1, j - 1)] + m;
                for (k, wk) in w.into_iter().enumerate() {
                    step_weights[(i - 1, j - 1, k)] = wk;
                }
            }
        }
        let (value, end_weights) = match boundary {
            Boundary::Strict => (r[(tq, ts)], vec![]),
            Boundary::Relaxed => {
                let last: Vec<f64> = (1..=ts).map(|j| r[(tq, j)]).collect();
                softmin(&last, gamma)
            }
        };
        Self {
            value,
            accumulated: r,
            step_weights,
            end_weights,
            boundary,
        }
    }

    /// `∂value/∂cost`, `t_q × t_s`.
    pub fn backward(&self) -> Array2<f64> {
        let tq = self.accumulated.nrows() - 1;
        let ts = self.accumulated.ncols() - 1;
        let mut adj = Array2::<f64>::zeros((tq + 1, ts + 1));
        match self.boundary {
            Boundary::Strict => adj[(tq, ts)] = 1.0,
            Boundary::Relaxed => {
                for (j, w) in self.end_weights.iter().enumerate() {
                    adj[(tq, j + 1)] = *w;
                }
            }
        }
        let mut grad = Array2::zeros((tq, ts));
        for i in (1..=tq).rev() {
            for j in (1..=ts).rev() {
                let g = adj[(i, j)];
                if g == 0.0 {
                    continue;
                }
                grad[(i - 1, j - 1)] = g;
                adj[(i - 1, j)] += g * self.step_weights[(i - 1, j - 1, 0)];
                adj[(i, j - 1)] += g * self.step_weights[(i - 1, j - 1, 1)];
                adj[(i - 1, j - 1)] += g * self.step_weights[(i - 1, j - 1, 2)];
            }
        }
        grad
    }
}

pub fn soft_dtw(cost: &CostMatrix, config: &AlignConfig) -> f64 {
    SoftDtw::forward(cost, config.gamma, config.boundary).value
}

pub fn soft_dtw_gradient(cost: &CostMatrix, config: &AlignConfig) -> Result<Array2<f64>> {
    if config.gamma <= 0.0 {
        return Err(Error::ZeroGamma);
    }
    Ok(SoftDtw::forward(cost, config.gamma, config.boundary).backward())
}

fn mean_frame(m: ArrayView2<f64>) -> Array2<f64> {
    m.mean_axis(Axis(0))
        .expect("non-empty sequence")
        .insert_axis(Axis(0))
}

pub fn alignment_distance(query: ArrayView2<f64>, support: ArrayView2<f64>, config: &AlignConfig) -> Result<f64> {
    match config.metric {
        Metric::SoftDtw => Ok(soft_dtw(&frame_cost(query, support)?, config)),
        Metric::MeanPool => {
            let c = frame_cost(mean_frame(query).view(), mean_frame(support).view())?;
            Ok(c.entries[(0, 0)])
        }
    }
}

/// Distance plus its gradient with respect to both sequences.
pub fn alignment_distance_grad(
    query: ArrayView2<f64>,
    support: ArrayView2<f64>,
    config: &AlignConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    match config.metric {
        Metric::SoftDtw => {
            if config.gamma <= 0.0 {
                return Err(Error::ZeroGamma);
            }
            let cost = frame_cost(query, support)?;
            let fwd = SoftDtw::forward(&cost, config.gamma, config.boundary);
            let gc = fwd.backward();
            let (dq, ds) = frame_cost_backward(query, support, gc.view())?;
            Ok((fwd.value, dq, ds))
        }
        Metric::MeanPool => {
            let qm = mean_frame(query);
            let sm = mean_frame(support);
            let c = frame_cost(qm.view(), sm.view())?;
            let (dqm, dsm) = frame_cost_backward(qm.view(), sm.view(), Array2::ones((1, 1)).view())?;
            let dq = Array2::from_shape_fn(query.dim(), |(_, k)| dqm[(0, k)] / query.nrows() as f64);
            let ds = Array2::from_shape_fn(support.dim(), |(_, k)| dsm[(0, k)] / support.nrows() as f64);
            Ok((c.entries[(0, 0)], dq, ds))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmin_bounds() {
        let xs = [0.3, 1.0, 0.31];
        for g in [1e-3, 0.1, 1.0] {
            let (v, w) = softmin(&xs, g);
            assert!(v <= 0.3 && 0.3 <= v + g * 3f64.ln());
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(softmin(&xs, 0.0).0, 0.3);
        assert_eq!(softmin(&[f64::INFINITY; 3], 0.5).0, f64::INFINITY);
    }

    #[test]
    fn zero_cost_is_zero_at_hard_min() {
        let c = CostMatrix::new(Array2::zeros((4, 5))).unwrap();
        for b in [Boundary::Strict, Boundary::Relaxed] {
            let cfg = AlignConfig { gamma: 0.0, boundary: b, metric: Metric::SoftDtw };
            assert_eq!(soft_dtw(&c, &cfg), 0.0);
        }
    }

    #[test]
    fn two_by_two_diagonal() {
        let c = CostMatrix::new(array![[1.0, 5.0], [5.0, 1.0]]).unwrap();
        assert_eq!(soft_dtw(&c, &AlignConfig::strict(0.0)), 2.0);
        let soft = soft_dtw(&c, &AlignConfig::strict(0.01));
        assert!(soft <= 2.0 && (soft - 2.0).abs() < 0.05);
    }

    #[test]
    fn frame_cost_special_cases() {
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        let c = frame_cost(x.view(), x.view()).unwrap();
        assert_eq!(c.entries[(0, 0)], 0.0);
        assert_eq!(c.entries[(1, 1)], 0.0);
        assert_eq!(c.entries[(0, 1)], 1.0);
        let z = array![[0.0, 0.0]];
        assert!(matches!(frame_cost(z.view(), x.view()), Err(Error::ZeroVector(0))));
        let w = array![[1.0, 0.0, 0.0]];
        assert!(matches!(frame_cost(w.view(), x.view()), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn zero_gamma_gradient_is_refused() {
        let c = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        assert!(matches!(soft_dtw_gradient(&c, &AlignConfig::strict(0.0)), Err(Error::ZeroGamma)));
    }

    #[test]
    fn single_frame_metrics_agree() {
        let q = array![[0.2, 0.9, -0.1]];
        let s = array![[0.5, 0.1, 0.4]];
        let dtw = alignment_distance(q.view(), s.view(), &AlignConfig::strict(0.1)).unwrap();
        let pool = alignment_distance(
            q.view(),
            s.view(),
            &AlignConfig { metric: Metric::MeanPool, ..AlignConfig::default() },
        )
        .unwrap();
        assert_eq!(dtw, pool);
    }
}
