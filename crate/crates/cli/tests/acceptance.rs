//! Acceptance criteria, one pass/fail line each. Optional arguments select
//! criteria by number: `cargo test -p aapm-cli --test acceptance -- 1 3`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use aapm::aam::{self, AssignmentConfig, KineticsLayout, GEOMETRY, OBJECT};
use aapm::align::{soft_dtw, soft_dtw_gradient, AlignConfig, CostMatrix};
use aapm::bench::{self, Benchmark, ExperimentSpec, BAYES_ORACLE};
use aapm::fewshot::{episode_loss, episode_loss_grad, ClassifierConfig, EpisodeBatch, Model, ModelVariant};
use aapm::schema::{AttributeDef, AttributeSchema, VideoSample};
use aapm::seed;
use aapm::tcm::{ConstrainVariant, TcmConfig, TcmParams, TcmWeights};
use ndarray::Array2;
use rand::Rng as _;
use serde_json::Value;

type Outcome = Result<String, String>;

const GOLDEN: &str = include_str!("golden/acceptance.json");
/// Allowed drift of a pinned accuracy.
const GOLDEN_TOL: f64 = 0.005;

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("soft-DTW oracle equivalence", c1_dtw_oracle, Some(Duration::from_secs(60))),
        ("gradient suite", c2_gradients, Some(Duration::from_secs(60))),
        ("initialization identity", c3_init_identity, None),
        ("confusion-benchmark ordering", c4_confusion, Some(Duration::from_secs(15 * 60))),
        ("degradation trend", c5_degradation, None),
        ("AAM statistics", c6_aam_stats, None),
        ("Multi-Kinetics builder", c7_builder, None),
        ("chance-level sanity", c8_chance, None),
        ("CLI determinism", c9_determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = run();
        let took = start.elapsed();
        if let (Ok(detail), Some(b)) = (&outcome, budget) {
            if took > *b {
                outcome = Err(format!("{detail}; over the {}s budget", b.as_secs()));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {tag} {name}: {detail} [{:.1}s]", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn golden(path: &[&str]) -> Value {
    let mut v: Value = serde_json::from_str(GOLDEN).expect("golden file parses");
    for k in path {
        v = v[*k].take();
    }
    v
}

/// Minimum total cost over monotonic paths from (0,0) to (n-1,m-1).
fn brute_force(c: &Array2<f64>) -> f64 {
    fn walk(c: &Array2<f64>, i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + c[(i, j)];
        let (n, m) = c.dim();
        if i == n - 1 && j == m - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < n {
            walk(c, i + 1, j, acc, best);
        }
        if j + 1 < m {
            walk(c, i, j + 1, acc, best);
        }
        if i + 1 < n && j + 1 < m {
            walk(c, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(c, 0, 0, 0.0, &mut best);
    best
}

fn c1_dtw_oracle() -> Outcome {
    let cfg = AlignConfig::strict(1e-4);
    let mut rng = seed::stream(2024, 0);
    let mut worst: f64 = 0.0;
    let mut cases = Vec::new();
    for _ in 0..10_000 {
        let (n, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
        cases.push(Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..2.0)));
    }
    for _ in 0..100 {
        cases.push(Array2::from_shape_fn((8, 8), |_| rng.random_range(0.0..2.0)));
    }
    for c in &cases {
        let soft = soft_dtw(&CostMatrix::new(c.clone()).map_err(|e| e.to_string())?, &cfg);
        worst = worst.max((soft - brute_force(c)).abs());
    }
    check(worst < 1e-3, format!("{} matrices, max |soft - brute| = {worst:.2e}", cases.len()))
}

fn unit_rows(rng: &mut seed::Rng, t: usize, d: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0f64..1.0));
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        r /= n;
    }
    m
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn block_mut<'a>(w: &'a mut TcmWeights, name: &str) -> &'a mut Array2<f64> {
    w.blocks_mut().into_iter().find(|(n, _)| *n == name).unwrap().1
}

fn c2_gradients() -> Outcome {
    const STEP: f64 = 1e-4;
    let mut rng = seed::stream(3, 0);
    let text = unit_rows(&mut rng, 2, 8);
    let support: Vec<Array2<f64>> = (0..2).map(|_| unit_rows(&mut rng, 3, 8)).collect();
    let queries: Vec<Array2<f64>> = (0..3).map(|_| unit_rows(&mut rng, 3, 8)).collect();
    let batch = EpisodeBatch {
        attribute: "a".into(),
        categories: vec!["x".into(), "y".into()],
        text,
        support: support.iter().map(|s| vec![s]).collect(),
        queries: queries.iter().collect(),
        labels: vec![0, 1, 1],
    };
    let cfg = ClassifierConfig::default();
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for variant in [ConstrainVariant::FrameQuery, ConstrainVariant::PooledContext] {
        let p = TcmParams::init(TcmConfig {
            d: 8,
            heads: 2,
            ffn_width: 16,
            variant,
            seed: 11,
            output_init_std: 0.3,
            ..TcmConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let (_, grads) = episode_loss_grad(&p, &batch, &cfg).map_err(|e| e.to_string())?;
        for (name, g) in grads.blocks() {
            for ((r, c), &gv) in g.indexed_iter() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                block_mut(&mut plus.weights, name)[(r, c)] += STEP;
                block_mut(&mut minus.weights, name)[(r, c)] -= STEP;
                let lp = episode_loss(&Model::Aapm(plus), &batch, &cfg).map_err(|e| e.to_string())?;
                let lm = episode_loss(&Model::Aapm(minus), &batch, &cfg).map_err(|e| e.to_string())?;
                let e = rel_err(gv, (lp - lm) / (2.0 * STEP));
                checked += 1;
                if e > worst.0 {
                    worst = (e, format!("{variant:?} {name}[{r},{c}]"));
                }
            }
        }
    }
    let dtw_cfg = AlignConfig::strict(0.1);
    let d = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..2.0));
    let g = soft_dtw_gradient(&CostMatrix::new(d.clone()).unwrap(), &dtw_cfg).map_err(|e| e.to_string())?;
    for ((i, j), &gv) in g.indexed_iter() {
        let mut plus = d.clone();
        let mut minus = d.clone();
        plus[(i, j)] += STEP;
        minus[(i, j)] -= STEP;
        let fd = (soft_dtw(&CostMatrix::new(plus).unwrap(), &dtw_cfg) - soft_dtw(&CostMatrix::new(minus).unwrap(), &dtw_cfg))
            / (2.0 * STEP);
        let e = rel_err(gv, fd);
        checked += 1;
        if e > worst.0 {
            worst = (e, format!("soft-DTW cost[{i},{j}]"));
        }
    }
    check(
        worst.0 < 1e-4,
        format!("{checked} scalars, worst relative error {:.2e} at {}", worst.0, worst.1),
    )
}

fn c3_init_identity() -> Outcome {
    let spec = ExperimentSpec::default();
    let bench = Benchmark::build(&spec.benchmark, 1).map_err(|e| e.to_string())?;
    let eval = spec.eval_spec("action", 1);
    let params = spec.initial_params(1).map_err(|e| e.to_string())?;
    let a = bench
        .evaluate(&Model::Aapm(params), &eval, &spec.classifier)
        .map_err(|e| e.to_string())?
        .to_json();
    let b = bench
        .evaluate(&Model::FrozenBaseline, &eval, &spec.classifier)
        .map_err(|e| e.to_string())?
        .to_json();
    check(a == b, format!("{} episodes, reports identical: {}", eval.episodes, a == b))
}

fn c4_confusion() -> Outcome {
    let spec = ExperimentSpec {
        attributes: vec!["action".into(), "scene".into()],
        ..ExperimentSpec::default()
    };
    let r = bench::run_comparison(&spec).map_err(|e| e.to_string())?;
    let attr = "action";
    let acc = |v: &str| r.mean_for("default", v, attr).unwrap_or(f64::NAN);
    let (aapm, frozen, text, bayes) = (acc("aapm"), acc("frozen-baseline"), acc("text-concat"), acc(BAYES_ORACLE));
    let scene = |v: &str| r.mean_for("default", v, "scene").unwrap_or(f64::NAN);
    let g = golden(&["confusion"]);
    let drift = [("aapm", aapm), ("frozen-baseline", frozen), ("text-concat", text), ("bayes-oracle", bayes)]
        .iter()
        .map(|(k, v)| (v - g[*k].as_f64().unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "{attr}: aapm {aapm:.4} frozen {frozen:.4} text-concat {text:.4} bayes {bayes:.4}; \
         margins vs frozen {:+.4}, vs text-concat {:+.4}, aapm/bayes {:.3}; golden drift {drift:.4}; \
         scene: aapm {:.4} frozen {:.4} text-concat {:.4}",
        aapm - frozen,
        aapm - text,
        aapm / bayes,
        scene("aapm"),
        scene("frozen-baseline"),
        scene("text-concat"),
    );
    check(
        aapm >= 0.9 * bayes && aapm > frozen && aapm > text && drift <= GOLDEN_TOL,
        detail,
    )
}

fn c5_degradation() -> Outcome {
    let spec = ExperimentSpec {
        name: "degrade".into(),
        ..ExperimentSpec::default()
    };
    let series = |v: ModelVariant| -> Result<Vec<f64>, String> {
        let r = bench::run_degradation_study(v, &spec).map_err(|e| e.to_string())?;
        Ok(r.series.iter().map(|p| p.accuracy).collect())
    };
    let frozen = series(ModelVariant::FrozenBaseline)?;
    let aapm = series(ModelVariant::Aapm)?;
    let monotone = frozen.windows(2).all(|w| w[1] <= w[0] + 0.005);
    let drop = aapm.iter().map(|a| aapm[0] - a).fold(0.0, f64::max);
    let pinned = |k: &str, s: &[f64]| {
        let g = golden(&["degradation", k]);
        s.iter()
            .enumerate()
            .map(|(i, v)| (v - g[i].as_f64().unwrap_or(f64::NAN)).abs())
            .fold(0.0, f64::max)
    };
    let drift = pinned("frozen-baseline", &frozen).max(pinned("aapm", &aapm));
    let fmt = |s: &[f64]| s.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" → ");
    check(
        monotone && drop <= 0.02 && drift <= GOLDEN_TOL,
        format!(
            "frozen {} (non-increasing: {monotone}); aapm {} (max drop {:.1} points); golden drift {drift:.4}",
            fmt(&frozen),
            fmt(&aapm),
            100.0 * drop
        ),
    )
}

fn c6_aam_stats() -> Outcome {
    let schema = AttributeSchema::new(vec![
        AttributeDef::new("action", vec!["a".into(), "b".into()], false),
        AttributeDef::new(GEOMETRY, aam::geometry_categories(), true),
        AttributeDef::new(OBJECT, aam::object_categories(), true),
    ])
    .map_err(|e| e.to_string())?;
    let config = AssignmentConfig {
        seed: 99,
        ..AssignmentConfig::default()
    };
    let n = 10_000;
    let mut present = vec![[0.0f64; 2]; n];
    for (i, row) in present.iter_mut().enumerate() {
        let s = VideoSample::new(format!("v{i:05}"), "").with_label("action", "a");
        let a = aam::assign_attributes(&s, &schema, &config);
        row[0] = a.sample.label(GEOMETRY).is_some() as u8 as f64;
        row[1] = a.sample.label(OBJECT).is_some() as u8 as f64;
    }
    let mean = |k: usize| present.iter().map(|r| r[k]).sum::<f64>() / n as f64;
    let (mg, mo) = (mean(0), mean(1));
    let cov = present.iter().map(|r| (r[0] - mg) * (r[1] - mo)).sum::<f64>() / n as f64;
    let r = cov / (mg * (1.0 - mg) * mo * (1.0 - mo)).sqrt();
    let inside = |f: f64| (0.487..=0.513).contains(&f);
    check(
        inside(mg) && inside(mo) && r.abs() < 0.026,
        format!("geometry {mg:.4}, object {mo:.4}, r = {r:+.4}"),
    )
}

fn c7_builder() -> Outcome {
    let (_, samples, annotations) = aam::paper_fixture();
    let layout = KineticsLayout::paper(0);
    let data = aam::build_multikinetics(&samples, &annotations, &AssignmentConfig::default(), &layout)
        .map_err(|e| e.to_string())?;
    let sizes = aam::validate_split(&data.schema, &data.split, &layout).map_err(|e| e.to_string())?;
    let summary = data.summary();
    let want_split = [("action", (64, 12, 24)), ("scene", (19, 5, 10)), ("geometry", (41, 8, 16)), ("object", (5, 5, 5))];
    let want_vocab = [
        ("action", 100),
        ("scene", 34),
        ("human-group", 4),
        ("illumination", 2),
        ("geometry", 65),
        ("object", 15),
    ];
    let split_ok = want_split.iter().all(|(a, (tr, va, te))| {
        sizes.get(*a).is_some_and(|c| (c.train, c.val, c.test) == (*tr, *va, *te))
    });
    let vocab_ok = want_vocab.iter().all(|(a, n)| summary.vocab.get(*a) == Some(n)) && summary.vocab.len() == 6;
    let splits: Vec<String> = sizes
        .iter()
        .map(|(a, c)| format!("{a} {}/{}/{}", c.train, c.val, c.test))
        .collect();
    let vocab: BTreeMap<_, _> = summary.vocab.clone();
    check(split_ok && vocab_ok, format!("splits [{}]; vocab {vocab:?}", splits.join(", ")))
}

fn c8_chance() -> Outcome {
    let spec = ExperimentSpec::default();
    let bench = Benchmark::build(&spec.benchmark, 1).map_err(|e| e.to_string())?.shuffled(5);
    let params = TcmParams::init(TcmConfig {
        output_init_std: 0.1,
        ..spec.initial_params(1).map_err(|e| e.to_string())?.config
    })
    .map_err(|e| e.to_string())?;
    let eval = aapm::fewshot::EvalSpec {
        episodes: 10_000,
        ..spec.eval_spec("action", 1)
    };
    let rep = bench
        .evaluate(&Model::Aapm(params), &eval, &spec.classifier)
        .map_err(|e| e.to_string())?;
    check(
        (rep.accuracy - 0.2).abs() <= 0.015,
        format!("{} episodes, accuracy {:.4} ± {:.4}", rep.episodes, rep.accuracy, rep.ci95),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_aapm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("aapm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().to_string();
                files.insert(rel, std::fs::read(&p).unwrap_or_default());
            }
        }
    }
    files
}

fn c9_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "name = \"det\"\nepisodes = 200\nseeds = [7]\nattributes = [\"action\", \"scene\"]\n\
         select_every = 50\nselect_episodes = 50\n[benchmark]\nsamples = 400\n[train]\nepisodes_per_epoch = 100\n",
    )
    .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let root = tmp.path().join(format!("run{k}"));
        std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
        let c = cfg.to_str().unwrap();
        run_cli(&["build-dataset", "--paper-fixture", "--out", "data", "--seed", "3"], &root)?;
        run_cli(&["train", "--config", c, "--preset", "desk", "--out", "results"], &root)?;
        run_cli(&["eval", "--config", c, "--preset", "desk", "--out", "results", "--compare", "--paper-refs"], &root)?;
        run_cli(
            &["eval", "--config", c, "--preset", "desk", "--set", "name=\"ckpt\"", "--out", "results", "--checkpoint", "results/det/checkpoint-s7.bin"],
            &root,
        )?;
        run_cli(&["report", "--input", "results/det", "--input", "results/ckpt", "--out", "merged"], &root)?;
        runs.push(snapshot(&root));
    }
    let files = runs[0].len();
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && runs[0].len() == runs[1].len() && files > 10,
        format!("{files} files compared across two runs, differing: {differing:?}"),
    )
}
