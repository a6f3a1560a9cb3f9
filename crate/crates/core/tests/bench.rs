use aapm::aam::{ACTION, OBJECT};
use aapm::align::alignment_distance;
use aapm::bench::{
    ablation_grid, ablation_setting, emit_report, read_csv, run_assignment_ablation, run_frozen_baseline, run_text_concat,
    Benchmark, BenchmarkConfig, ExperimentSpec,
};
use aapm::error::Error;
use aapm::fewshot::{ClassifierConfig, EpisodeBatch, Model, TrainConfig};
use aapm::schema::{EpisodeSampler, Split};
use aapm::seed;
use ndarray::{concatenate, Array2, Axis};

fn tiny(name: &str) -> ExperimentSpec {
    let base = ExperimentSpec::default();
    ExperimentSpec {
        name: name.into(),
        episodes: 40,
        seeds: vec![1],
        benchmark: BenchmarkConfig { samples: 400, ..base.benchmark.clone() },
        train: TrainConfig { episodes_per_epoch: 10, ..base.train.clone() },
        select_every: 5,
        select_episodes: 10,
        ..base
    }
}

#[test]
fn report_has_one_table_and_csv_per_experiment() {
    let a = run_frozen_baseline(&tiny("frozen")).unwrap();
    let b = run_text_concat(&tiny("concat")).unwrap();
    assert_eq!(a.rows, run_frozen_baseline(&tiny("frozen")).unwrap().rows);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&[a.clone(), b.clone()], dir.path(), false).unwrap();
    let md = std::fs::read_to_string(&files.markdown).unwrap();
    assert_eq!(md.matches("\n## ").count(), 2);
    assert_eq!(md.matches("| setting | variant |").count(), 2);
    assert_eq!(files.csv.len(), 2);
    assert_eq!(read_csv(&files.csv[0]).unwrap(), a.rows);
    assert_eq!(read_csv(&files.csv[1]).unwrap(), b.rows);
    assert!(matches!(emit_report(&[], &dir.path().join("none"), false), Err(Error::EmptyResults)));
}

#[test]
fn text_concat_appends_one_text_frame() {
    let spec = tiny("concat");
    let bench = Benchmark::build(&spec.benchmark, 1).unwrap();
    let sampler = EpisodeSampler::new(&bench.eval_samples, &bench.split, ACTION, Split::Test);
    let ep = sampler.sample(5, 1, 4, &mut seed::stream(3, 0)).unwrap();
    let batch = EpisodeBatch::resolve(&ep, &bench.bank).unwrap();
    let cfg = ClassifierConfig::default();
    let probs = Model::TextConcat.predict(&batch, &cfg).unwrap();
    let mean_text = batch.text.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
    let with = |frames: &Array2<f64>, text: ndarray::ArrayView2<f64>| concatenate(Axis(0), &[frames.view(), text]).unwrap();
    for (q, p) in batch.queries.iter().zip(&probs) {
        let query = with(q, mean_text.view());
        assert_eq!(query.nrows(), 9);
        let dists: Vec<f64> = (0..5)
            .map(|n| {
                let support = with(batch.support[n][0], batch.text.slice(ndarray::s![n..n + 1, ..]));
                alignment_distance(query.view(), support.view(), &cfg.align).unwrap()
            })
            .collect();
        let z: f64 = dists.iter().map(|d| (-d).exp()).sum();
        for (n, d) in dists.iter().enumerate() {
            assert!((p[n] - (-d).exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn ablation_reports_every_grid_point() {
    let spec = ExperimentSpec {
        benchmark: ExperimentSpec::default().benchmark,
        ..tiny("ablation")
    };
    let res = run_assignment_ablation(&ablation_grid(), &spec).unwrap();
    assert_eq!(res.rows.len(), 8);
    for (p1, p2) in ablation_grid() {
        let setting = ablation_setting(p1, p2);
        for attr in [ACTION, OBJECT] {
            let acc = res.mean_for(&setting, "aapm", attr).unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
    }
    assert_eq!(res.rows, run_assignment_ablation(&ablation_grid(), &spec).unwrap().rows);
}
