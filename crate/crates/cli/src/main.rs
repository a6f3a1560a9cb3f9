use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aapm::aam::{self, AssignmentConfig, KineticsLayout};
use aapm::bench::{self, Benchmark, ExperimentResult, ExperimentSpec, ResultRow, RunMetadata, SeriesPoint};
use aapm::config::{self, Mode, Preset, ResolvedConfig};
use aapm::encoder::{cache_features, SyntheticEncoder, SyntheticEncoderConfig};
use aapm::fewshot::{Model, ModelVariant};
use aapm::tcm::{load_checkpoint, save_checkpoint};
use aapm::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aapm", version, about = "Attribute-constrained few-shot recognition")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Multi-Kinetics manifest and split file.
    BuildDataset(BuildDataset),
    /// Encode a manifest with the synthetic encoder into a feature cache.
    CacheFeatures(CacheFeatures),
    /// Train the constrain module on the synthetic benchmark.
    Train(RunArgs),
    /// Evaluate on the synthetic benchmark.
    Eval(EvalArgs),
    /// Assignment-probability ablation grid.
    Ablate(RunArgs),
    /// Accuracy against number of attributes.
    Degrade(DegradeArgs),
    /// Merge result directories into one report.
    Report(ReportArgs),
}

#[derive(Args)]
struct BuildDataset {
    /// Directory receiving manifest.jsonl, splits.json and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Use the built-in fixture with the paper's vocabulary sizes.
    #[arg(long, conflicts_with_all = ["source", "annotations"])]
    paper_fixture: bool,
    /// Action manifest (JSONL).
    #[arg(long, requires = "annotations")]
    source: Option<PathBuf>,
    /// Scene / human-group / illumination annotations (JSONL).
    #[arg(long, requires = "source")]
    annotations: Option<PathBuf>,
    /// Seeds attribute assignment and the category split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CacheFeatures {
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to $AAPM_CACHE_DIR, then ./cache.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// paper, desk or 5shot; applied in order.
    #[arg(long)]
    preset: Vec<String>,
    /// Dotted-key override, e.g. train.learning_rate=1e-3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Single seed replacing the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Results root; outputs go to <out>/<name>/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Evaluate a trained checkpoint instead of the configured variant.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Frozen baseline, text-concat, trained model and Bayes oracle side by side.
    #[arg(long, conflicts_with = "checkpoint")]
    compare: bool,
    /// Print the paper-scale reference numbers beside the synthetic ones.
    #[arg(long)]
    paper_refs: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Aapm,
    FrozenBaseline,
    TextConcat,
}

impl From<VariantArg> for ModelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Aapm => ModelVariant::Aapm,
            VariantArg::FrozenBaseline => ModelVariant::FrozenBaseline,
            VariantArg::TextConcat => ModelVariant::TextConcat,
        }
    }
}

#[derive(Args)]
struct DegradeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Variants to run, in order.
    #[arg(long, value_enum, default_values = ["frozen-baseline", "aapm"])]
    variant: Vec<VariantArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result directories holding `<name>.csv` files.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Directory receiving report.md, the merged CSVs and plot.csv.
    #[arg(long)]
    out: PathBuf,
    /// Print the paper-scale reference numbers beside the synthetic ones.
    #[arg(long)]
    paper_refs: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildDataset(a) => build_dataset(a),
        Command::CacheFeatures(a) => cache(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Degrade(a) => degrade(a),
        Command::Report(a) => report(a),
    }
}

fn build_dataset(a: BuildDataset) -> Result<()> {
    let (source, annotations, layout) = if a.paper_fixture {
        let (_, samples, ann) = aam::paper_fixture();
        (samples, ann, KineticsLayout::paper(a.seed))
    } else {
        let (Some(src), Some(ann)) = (&a.source, &a.annotations) else {
            return Err(Error::Config(vec![
                "build-dataset needs --paper-fixture or both --source and --annotations".into(),
            ]));
        };
        let (_, samples) = aapm::schema::load_manifest(src)?;
        let ann = aam::load_annotations(ann)?;
        let actions: BTreeSet<&str> = samples.iter().filter_map(|s| s.label(aam::ACTION)).collect();
        let scenes: BTreeSet<&str> = ann.iter().map(|x| x.scene.as_str()).collect();
        let layout = KineticsLayout::proportional(actions.len(), scenes.len(), a.seed);
        (samples, ann, layout)
    };
    let assign = AssignmentConfig {
        seed: a.seed,
        ..AssignmentConfig::default()
    };
    let data = aam::build_multikinetics(&source, &annotations, &assign, &layout)?;
    let sizes = aam::validate_split(&data.schema, &data.split, &layout)?;
    data.write(&a.out)?;
    for (attr, c) in &sizes {
        log::info!("{attr}: {}/{}/{}", c.train, c.val, c.test);
    }
    log::info!("{} samples written to {}", data.samples.len(), a.out.display());
    Ok(())
}

fn cache(a: CacheFeatures) -> Result<()> {
    let (schema, samples) = aapm::schema::load_manifest(&a.manifest)?;
    let encoder = SyntheticEncoder::new(
        SyntheticEncoderConfig {
            d: a.d,
            t: a.t,
            basis_seed: a.seed,
            ..SyntheticEncoderConfig::default()
        },
        &schema,
    )?;
    let dir = config::cache_dir(a.cache);
    let r = cache_features(&samples, &schema, &encoder, &dir)?;
    log::info!(
        "{}: {} visual written, {} verified; {} text written, {} verified",
        dir.display(),
        r.written,
        r.skipped,
        r.text_written,
        r.text_skipped
    );
    Ok(())
}

fn resolve(a: &RunArgs, mode: Mode) -> Result<(ResolvedConfig, PathBuf)> {
    let text = match &a.config {
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            // JSON specs are complete; re-serialize so they layer like TOML.
            Some(ExperimentSpec::load(path)?.to_toml())
        }
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?),
        None => None,
    };
    let presets = a
        .preset
        .iter()
        .map(|p| p.parse::<Preset>())
        .collect::<Result<Vec<_>>>()?;
    let mut overrides = a.overrides.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("seeds=[{seed}]"));
    }
    let resolved = config::resolve(text.as_deref(), &presets, &overrides, mode)?;
    log::info!("resolved configuration:\n{}", resolved.text);
    let dir = a.out.join(&resolved.spec.name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    aapm::write_atomic(&dir.join("config.toml"), resolved.text.as_bytes())?;
    RunMetadata::new(&resolved.spec.name, &resolved.spec.seeds, &resolved.spec, git_hash()).write(&dir)?;
    Ok((resolved, dir))
}

fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .stderr(std::process::Stdio::null())
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn train(a: RunArgs) -> Result<()> {
    let (r, dir) = resolve(&a, Mode::Train)?;
    let spec = &r.spec;
    spec.validate()?;
    for &s in &spec.seeds {
        let bench = Benchmark::build(&spec.benchmark, s)?;
        let outcome = bench::train_aapm(spec, &bench, s)?;
        let ckpt = dir.join(format!("checkpoint-s{s}.bin"));
        save_checkpoint(&outcome.params, &ckpt)?;
        aapm::write_atomic(&dir.join(format!("loss-s{s}.csv")), outcome.trace_csv().as_bytes())?;
        log::info!("seed {s}: checkpoint {}", ckpt.display());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (r, dir) = resolve(&a.run, Mode::Eval)?;
    let spec = &r.spec;
    let result = if a.compare {
        bench::run_comparison(spec)?
    } else if let Some(path) = &a.checkpoint {
        spec.validate()?;
        let params = load_checkpoint(path)?;
        let mut rows = Vec::new();
        for &s in &spec.seeds {
            let bench = Benchmark::build(&spec.benchmark, s)?;
            rows.extend(bench::evaluate_rows(spec, &bench, &Model::Aapm(params.clone()), "default", s)?);
        }
        ExperimentResult {
            name: spec.name.clone(),
            rows,
            series: Vec::new(),
        }
    } else {
        bench::run_experiment(spec)?
    };
    log_rows(&result.rows);
    bench::emit_report(&[result], &dir, a.paper_refs)?;
    Ok(())
}

fn ablate(a: RunArgs) -> Result<()> {
    let (r, dir) = resolve(&a, Mode::Ablate)?;
    let result = bench::run_assignment_ablation(&bench::ablation_grid(), &r.spec)?;
    log_rows(&result.rows);
    bench::emit_report(&[result], &dir, false)?;
    Ok(())
}

fn degrade(a: DegradeArgs) -> Result<()> {
    let (r, dir) = resolve(&a.run, Mode::Degrade)?;
    let mut results = Vec::new();
    for v in &a.variant {
        let variant = ModelVariant::from(*v);
        let mut res = bench::run_degradation_study(variant, &r.spec)?;
        res.name = format!("{}-{}", r.spec.name, bench::variant_name(variant));
        for p in &res.series {
            log::info!("{} {} attributes: {:.4}", p.series, p.attributes, p.accuracy);
        }
        results.push(res);
    }
    bench::emit_report(&results, &dir, false)?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut results = Vec::new();
    for input in &a.input {
        let mut from_dir = Vec::new();
        let entries = std::fs::read_dir(input).map_err(|e| Error::Io {
            path: input.clone(),
            source: e,
        })?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let is_csv = path.extension().is_some_and(|e| e == "csv");
            let name = path.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
            if !is_csv || name == "plot" || name.starts_with("loss-") {
                continue;
            }
            from_dir.push(ExperimentResult {
                name,
                rows: bench::read_csv(&path)?,
                series: Vec::new(),
            });
        }
        attach_series(input, &mut from_dir)?;
        results.extend(from_dir);
    }
    bench::emit_report(&results, &a.out, a.paper_refs)?;
    log::info!("report written to {}", a.out.display());
    Ok(())
}

/// Series points go back to the result whose variant they summarize.
fn attach_series(dir: &Path, results: &mut [ExperimentResult]) -> Result<()> {
    let path = dir.join("plot.csv");
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut by_series: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parse = || -> Option<SeriesPoint> {
            let mut f = line.split(',');
            Some(SeriesPoint {
                series: f.next()?.to_string(),
                attributes: f.next()?.parse().ok()?,
                accuracy: f.next()?.parse().ok()?,
            })
        };
        let p = parse().ok_or_else(|| Error::ManifestParse {
            path: path.clone(),
            line: i + 1,
            reason: "expected series,attributes,accuracy".into(),
        })?;
        by_series.entry(p.series.clone()).or_default().push(p);
    }
    for r in results.iter_mut() {
        let variants: BTreeSet<&str> = r.rows.iter().map(|x| x.variant.as_str()).collect();
        for v in variants {
            if let Some(points) = by_series.remove(v) {
                r.series.extend(points);
            }
        }
    }
    Ok(())
}

fn log_rows(rows: &[ResultRow]) {
    for row in rows {
        log::info!(
            "{} {} {} seed {}: {:.4} ± {:.4}",
            row.setting,
            row.variant,
            row.attribute,
            row.seed,
            row.accuracy,
            row.ci95
        );
    }
}
