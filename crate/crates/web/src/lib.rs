//! Browser demo over `aapm`: a soft-DTW alignment viewer, a prototype
//! confusion explorer on the synthetic benchmark, and the AAM overlay
//! renderer. Each operation is a plain Rust function returning JSON (or
//! pixels); the `wasm_bindgen` exports are thin wrappers.

use aapm::aam::{self, OverlayKind, OverlaySpec, Placement};
use aapm::align::{frame_cost, soft_dtw, soft_dtw_gradient, AlignConfig, Boundary, Metric};
use aapm::bench::{Benchmark, BenchmarkConfig, DEGRADATION_ORDER};
use aapm::fewshot::{ClassifierConfig, EvalSpec, Model};
use aapm::schema::Split;
use aapm::seed;
use image::{Rgb, RgbImage};
use ndarray::{Array1, Array2};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct AlignmentView {
    pub cost: Vec<Vec<f64>>,
    /// Expected alignment: d(soft-DTW)/d(cost).
    pub alignment: Vec<Vec<f64>>,
    /// Hard path as an indicator matrix (soft-DTW at a tiny gamma).
    pub path: Vec<Vec<f64>>,
    pub distance: f64,
    pub hard_distance: f64,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A smooth random trajectory on the unit sphere, `t` frames of width `d`.
fn trajectory(rng: &mut seed::Rng, t: usize, d: usize) -> Array2<f64> {
    use rand::Rng as _;
    let a = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let b = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let c = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let mut m = Array2::zeros((t, d));
    for i in 0..t {
        let s = i as f64 / (t.max(2) - 1) as f64 * std::f64::consts::PI;
        let v = &a * s.cos() + &b * s.sin() + &c * (2.0 * s).sin() * 0.5;
        m.row_mut(i).assign(&(&v / v.dot(&v).sqrt()));
    }
    m
}

/// Support follows a trajectory at uniform speed; the query runs the same
/// trajectory with its time axis bent by `warp` in `[0, 1)`.
pub fn alignment_view(
    seed_value: u64,
    t_query: usize,
    t_support: usize,
    warp: f64,
    gamma: f64,
    relaxed: bool,
) -> Result<AlignmentView, String> {
    if t_query == 0 || t_support == 0 || t_query > 64 || t_support > 64 {
        return Err("sequence lengths must lie in 1..=64".into());
    }
    if !(0.0..1.0).contains(&warp) {
        return Err("warp must lie in [0, 1)".into());
    }
    if !(gamma > 0.0) {
        return Err("gamma must be positive".into());
    }
    let d = 16;
    let fine = 256;
    let mut rng = seed::stream(seed_value, 0);
    let base = trajectory(&mut rng, fine, d);
    let pick = |t: usize, bend: f64| {
        let mut m = Array2::zeros((t, d));
        for i in 0..t {
            let u = if t == 1 { 0.0 } else { i as f64 / (t - 1) as f64 };
            let u = u.powf(1.0 + 3.0 * bend);
            let k = ((u * (fine - 1) as f64).round() as usize).min(fine - 1);
            m.row_mut(i).assign(&base.row(k));
        }
        m
    };
    let support = pick(t_support, 0.0);
    let query = pick(t_query, warp);
    let cost = frame_cost(query.view(), support.view()).map_err(|e| e.to_string())?;
    let boundary = if relaxed { Boundary::Relaxed } else { Boundary::Strict };
    let soft = AlignConfig {
        gamma,
        boundary,
        metric: Metric::SoftDtw,
    };
    let hard = AlignConfig { gamma: 1e-4, ..soft };
    Ok(AlignmentView {
        alignment: rows(&soft_dtw_gradient(&cost, &soft).map_err(|e| e.to_string())?),
        path: rows(&soft_dtw_gradient(&cost, &hard).map_err(|e| e.to_string())?),
        distance: soft_dtw(&cost, &soft),
        hard_distance: soft_dtw(&cost, &hard),
        cost: rows(&cost.entries),
    })
}

#[derive(Debug, Serialize)]
pub struct ConfusionRow {
    pub attribute: String,
    pub frozen: f64,
    pub text_concat: f64,
    pub bayes: f64,
}

/// Frozen prototypes, text concatenation and the Bayes oracle on a small
/// benchmark whose videos carry the first `attributes` labels at once.
pub fn confusion(seed_value: u64, attributes: usize, episodes: usize, shot: usize) -> Result<Vec<ConfusionRow>, String> {
    if !(1..=DEGRADATION_ORDER.len()).contains(&attributes) {
        return Err(format!("attributes must lie in 1..={}", DEGRADATION_ORDER.len()));
    }
    if episodes == 0 || episodes > 2000 || !(1..=5).contains(&shot) {
        return Err("episodes must lie in 1..=2000 and shot in 1..=5".into());
    }
    let attrs: Vec<String> = DEGRADATION_ORDER[..attributes].iter().map(|s| s.to_string()).collect();
    let config = BenchmarkConfig {
        attributes: attrs.clone(),
        samples: 600,
        ..BenchmarkConfig::default()
    };
    let bench = Benchmark::build(&config, seed_value).map_err(|e| e.to_string())?;
    let classifier = ClassifierConfig::default();
    attrs
        .iter()
        .map(|a| {
            let spec = EvalSpec {
                attribute: a.clone(),
                split: Split::Test,
                way: 5,
                shot,
                queries: 25,
                episodes,
                seed: seed::derive(seed_value, 1),
            };
            let acc = |m: &Model| bench.evaluate(m, &spec, &classifier).map(|r| r.accuracy);
            let bayes = bench.bayes_episode_accuracies(&spec).map_err(|e| e.to_string())?;
            Ok(ConfusionRow {
                attribute: a.clone(),
                frozen: acc(&Model::FrozenBaseline).map_err(|e| e.to_string())?,
                text_concat: acc(&Model::TextConcat).map_err(|e| e.to_string())?,
                bayes: bayes.iter().sum::<f64>() / bayes.len() as f64,
            })
        })
        .collect()
}

fn kind(name: &str) -> Result<OverlayKind, String> {
    OverlayKind::for_attribute(name).ok_or_else(|| format!("unknown overlay kind `{name}` (geometry or object)"))
}

pub fn overlay_categories(kind_name: &str) -> Result<Vec<String>, String> {
    Ok(match kind(kind_name)? {
        OverlayKind::Geometry => aam::geometry_categories(),
        OverlayKind::Object => aam::object_categories(),
    })
}

/// RGBA pixels of one overlay drawn on a `size × size` gradient backdrop.
pub fn overlay_pixels(kind_name: &str, category: &str, cx: f64, cy: f64, scale: f64, size: u32) -> Result<Vec<u8>, String> {
    if !(8..=512).contains(&size) {
        return Err("size must lie in 8..=512".into());
    }
    let spec = OverlaySpec {
        kind: kind(kind_name)?,
        category: category.to_string(),
        placement: Placement { cx, cy, scale },
        opacity: 1.0,
    };
    let backdrop = RgbImage::from_fn(size, size, |x, y| {
        let v = (96 + (x + y) * 64 / (2 * size)) as u8;
        Rgb([v, v, v.saturating_add(16)])
    });
    let out = aam::render_overlay(&[backdrop], &spec).map_err(|e| e.to_string())?;
    Ok(out[0].pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect())
}

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = alignmentView)]
pub fn alignment_view_js(seed: u32, t_query: usize, t_support: usize, warp: f64, gamma: f64, relaxed: bool) -> Result<String, JsValue> {
    js(alignment_view(seed as u64, t_query, t_support, warp, gamma, relaxed))
}

#[wasm_bindgen(js_name = confusion)]
pub fn confusion_js(seed: u32, attributes: usize, episodes: usize, shot: usize) -> Result<String, JsValue> {
    js(confusion(seed as u64, attributes, episodes, shot))
}

#[wasm_bindgen(js_name = overlayCategories)]
pub fn overlay_categories_js(kind: &str) -> Result<String, JsValue> {
    js(overlay_categories(kind))
}

#[wasm_bindgen(js_name = overlayPixels)]
pub fn overlay_pixels_js(kind: &str, category: &str, cx: f64, cy: f64, scale: f64, size: u32) -> Result<Vec<u8>, JsValue> {
    overlay_pixels(kind, category, cx, cy, scale, size).map_err(|e| JsValue::from_str(&e))
}
