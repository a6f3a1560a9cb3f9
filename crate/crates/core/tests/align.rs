use aapm::align::{
    alignment_distance, frame_cost, soft_dtw, soft_dtw_gradient, softmin, AlignConfig, Boundary, CostMatrix, Metric,
};
use ndarray::Array2;
use proptest::prelude::*;

/// Every monotone path with its visited cells.
fn paths(tq: usize, ts: usize, boundary: Boundary) -> Vec<Vec<(usize, usize)>> {
    fn walk(i: usize, j: usize, tq: usize, ts: usize, relaxed: bool, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        cur.push((i, j));
        let done = if relaxed { i == tq - 1 } else { i == tq - 1 && j == ts - 1 };
        if done {
            out.push(cur.clone());
        }
        if i + 1 < tq {
            walk(i + 1, j, tq, ts, relaxed, cur, out);
        }
        if j + 1 < ts {
            walk(i, j + 1, tq, ts, relaxed, cur, out);
        }
        if i + 1 < tq && j + 1 < ts {
            walk(i + 1, j + 1, tq, ts, relaxed, cur, out);
        }
        cur.pop();
    }
    let mut out = Vec::new();
    match boundary {
        Boundary::Strict => walk(0, 0, tq, ts, false, &mut Vec::new(), &mut out),
        Boundary::Relaxed => {
            for j in 0..ts {
                walk(0, j, tq, ts, true, &mut Vec::new(), &mut out);
            }
        }
    }
    out
}

fn path_costs(c: &Array2<f64>, boundary: Boundary) -> (Vec<Vec<(usize, usize)>>, Vec<f64>) {
    let ps = paths(c.nrows(), c.ncols(), boundary);
    let costs = ps.iter().map(|p| p.iter().map(|&ij| c[ij]).sum()).collect();
    (ps, costs)
}

fn oracle_value(c: &Array2<f64>, gamma: f64, boundary: Boundary) -> f64 {
    let (_, costs) = path_costs(c, boundary);
    let m = costs.iter().copied().fold(f64::INFINITY, f64::min);
    m - gamma * costs.iter().map(|v| (-(v - m) / gamma).exp()).sum::<f64>().ln()
}

fn oracle_occupancy(c: &Array2<f64>, gamma: f64, boundary: Boundary) -> Array2<f64> {
    let (ps, costs) = path_costs(c, boundary);
    let m = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = costs.iter().map(|v| (-(v - m) / gamma).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut occ = Array2::zeros(c.raw_dim());
    for (p, wp) in ps.iter().zip(&w) {
        for &ij in p {
            occ[ij] += wp / z;
        }
    }
    occ
}

fn cost(c: Array2<f64>) -> CostMatrix {
    CostMatrix::new(c).unwrap()
}

fn relaxed(gamma: f64) -> AlignConfig {
    AlignConfig {
        gamma,
        boundary: Boundary::Relaxed,
        metric: Metric::SoftDtw,
    }
}

fn matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| {
        prop::collection::vec(0.0f64..2.0, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn sequence(t: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1.0f64..1.0, t * d)
        .prop_filter("non-zero frames", move |v| v.chunks(d).all(|f| f.iter().map(|x| x * x).sum::<f64>() > 1e-3))
        .prop_map(move |v| Array2::from_shape_vec((t, d), v).unwrap())
}

#[test]
fn two_by_two_example() {
    let c = cost(ndarray::array![[1.0, 5.0], [5.0, 1.0]]);
    assert!((soft_dtw(&c, &AlignConfig::strict(0.0)) - 2.0).abs() < 1e-12);
    let soft = soft_dtw(&c, &AlignConfig::strict(0.01));
    assert!(soft <= 2.0 && soft > 1.95, "{soft}");
}

#[test]
fn eight_frames_match_path_enumeration() {
    let mut rng = aapm::seed::stream(11, 0);
    use rand::Rng;
    for _ in 0..5 {
        let c = Array2::from_shape_fn((8, 8), |_| rng.random_range(0.0..2.0));
        for boundary in [Boundary::Strict, Boundary::Relaxed] {
            let got = soft_dtw(&cost(c.clone()), &AlignConfig { gamma: 1e-3, boundary, metric: Metric::SoftDtw });
            let want = oracle_value(&c, 1e-3, boundary);
            assert!((got - want).abs() < 1e-9, "{boundary:?}: {got} vs {want}");
        }
    }
}

#[test]
fn zero_cost_gradient_counts_paths() {
    let c = Array2::zeros((3, 4));
    for boundary in [Boundary::Strict, Boundary::Relaxed] {
        let cfg = AlignConfig { gamma: 0.5, boundary, metric: Metric::SoftDtw };
        let g = soft_dtw_gradient(&cost(c.clone()), &cfg).unwrap();
        let ps = paths(3, 4, boundary);
        let mut visits = Array2::<f64>::zeros((3, 4));
        for p in &ps {
            for &ij in p {
                visits[ij] += 1.0;
            }
        }
        visits /= ps.len() as f64;
        for (a, b) in g.iter().zip(visits.iter()) {
            assert!((a - b).abs() < 1e-12, "{boundary:?}\n{g}\n{visits}");
        }
    }
}

#[test]
fn frame_cost_matches_cosine() {
    let q = ndarray::array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.0], [3.0, 3.0, 3.0]];
    let s = ndarray::array![[0.0, 1.0, 0.0], [-1.0, 0.0, -2.0], [1.0, 1.0, 1.0]];
    let c = frame_cost(q.view(), s.view()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (q.row(i), s.row(j));
            let want = 1.0 - a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
            assert!((c.entries[(i, j)] - want).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn softmin_is_bounded(v in prop::collection::vec(-5.0f64..5.0, 1..6), gamma in 1e-3f64..2.0) {
        let (s, w) = softmin(&v, gamma);
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(s <= m + 1e-12);
        prop_assert!(s >= m - gamma * (v.len() as f64).ln() - 1e-12);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_matches_enumeration(c in matrix(), gamma in 0.01f64..1.0, strict in any::<bool>()) {
        let boundary = if strict { Boundary::Strict } else { Boundary::Relaxed };
        let cfg = AlignConfig { gamma, boundary, metric: Metric::SoftDtw };
        let got = soft_dtw(&cost(c.clone()), &cfg);
        prop_assert!((got - oracle_value(&c, gamma, boundary)).abs() < 1e-9);
        let g = soft_dtw_gradient(&cost(c.clone()), &cfg).unwrap();
        let occ = oracle_occupancy(&c, gamma, boundary);
        for (a, b) in g.iter().zip(occ.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_in_each_cell(c in matrix(), gamma in 0.01f64..1.0, bump in 0.0f64..1.0, pick in any::<prop::sample::Index>()) {
        let mut d = c.clone();
        let k = pick.index(d.len());
        let cols = d.ncols();
        d[(k / cols, k % cols)] += bump;
        for cfg in [AlignConfig::strict(gamma), relaxed(gamma)] {
            prop_assert!(soft_dtw(&cost(d.clone()), &cfg) >= soft_dtw(&cost(c.clone()), &cfg) - 1e-12);
        }
    }

    #[test]
    fn strict_is_symmetric(c in matrix(), gamma in 0.0f64..1.0) {
        let cfg = AlignConfig::strict(gamma);
        let a = soft_dtw(&cost(c.clone()), &cfg);
        let b = soft_dtw(&cost(c.t().to_owned()), &cfg);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn converges_to_hard_dtw(c in matrix(), gamma in 1e-3f64..1.0) {
        let hard = soft_dtw(&cost(c.clone()), &AlignConfig::strict(0.0));
        let soft = soft_dtw(&cost(c.clone()), &AlignConfig::strict(gamma));
        let n = paths(c.nrows(), c.ncols(), Boundary::Strict).len() as f64;
        prop_assert!(soft <= hard + 1e-12);
        prop_assert!(soft >= hard - gamma * n.ln() - 1e-9);
    }

    #[test]
    fn costs_are_in_range(q in sequence(3, 4), s in sequence(2, 4)) {
        let c = frame_cost(q.view(), s.view()).unwrap();
        prop_assert!(c.entries.iter().all(|v| (0.0..=2.0).contains(v)));
    }

    #[test]
    fn single_frames_reduce_to_cosine(q in sequence(1, 5), s in sequence(1, 5)) {
        let a = alignment_distance(q.view(), s.view(), &relaxed(0.1)).unwrap();
        let b = alignment_distance(q.view(), s.view(), &AlignConfig { metric: Metric::MeanPool, ..relaxed(0.1) }).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
