//! Run configuration: TOML experiment files layered over presets, dotted-key
//! overrides, and aggregated validation.

use std::path::PathBuf;
use std::str::FromStr;

use toml::{Table, Value};

use crate::aam::OBJECT;
use crate::bench::ExperimentSpec;
use crate::error::{Error, Result};

/// Overrides the feature-cache location.
pub const CACHE_DIR_ENV: &str = "AAPM_CACHE_DIR";

/// Tables whose keys are free-form (attribute names).
const OPEN_TABLES: &[&str] = &["probabilities", "benchmark.encoder.attribute_weights"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full evaluation budget (10,000 episodes).
    Paper,
    /// Shrunk budgets that finish in minutes on one core.
    Desk,
    /// 5-shot episodes.
    FiveShot,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            "5shot" | "five-shot" => Ok(Preset::FiveShot),
            other => Err(Error::Config(vec![format!(
                "unknown preset `{other}` (expected paper, desk or 5shot)"
            )])),
        }
    }
}

impl Preset {
    pub fn apply(self, spec: &mut ExperimentSpec) {
        match self {
            Preset::Paper => {
                spec.episodes = 10_000;
                spec.train.learning_rate = 1e-4;
            }
            Preset::Desk => {
                let desk = ExperimentSpec::default();
                spec.episodes = desk.episodes;
                spec.train = desk.train;
            }
            Preset::FiveShot => spec.shot = 5,
        }
    }
}

/// What the resolved configuration will drive; some checks depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    Ablate,
    Degrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub spec: ExperimentSpec,
    /// Resolved TOML, sufficient to reproduce the run.
    pub text: String,
}

/// Defaults before any preset or file: the paper's settings.
pub fn paper_defaults() -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    Preset::Paper.apply(&mut spec);
    spec
}

/// Layers `text` over the defaults and presets, then applies `key=value`
/// overrides. All problems are collected into one `Error::Config`.
pub fn resolve(text: Option<&str>, presets: &[Preset], overrides: &[String], mode: Mode) -> Result<ResolvedConfig> {
    let mut base = paper_defaults();
    for p in presets {
        p.apply(&mut base);
    }
    let mut tree = Value::try_from(&base).expect("experiment spec serializes");
    let mut errs = Vec::new();
    let mut explicit = Vec::new();

    if let Some(text) = text {
        match text.parse::<Table>() {
            Ok(user) => merge(&mut tree, user, "", &mut errs, &mut explicit),
            Err(e) => errs.push(format!("config file: {}", e.message())),
        }
    }
    for item in overrides {
        match parse_override(item) {
            Ok((path, value)) => {
                let mut nested = value;
                for key in path.iter().rev() {
                    let mut t = Table::new();
                    t.insert(key.clone(), nested);
                    nested = Value::Table(t);
                }
                if let Value::Table(t) = nested {
                    merge(&mut tree, t, "", &mut errs, &mut explicit);
                }
            }
            Err(e) => errs.push(e),
        }
    }
    let spec: ExperimentSpec = match tree.try_into() {
        Ok(spec) => spec,
        Err(e) => {
            errs.push(e.message().to_string());
            return Err(Error::Config(errs));
        }
    };
    errs.extend(spec.problems());
    let mut spec = spec;
    let derived = [
        ("train.way", spec.train.way == spec.way),
        ("train.shot", spec.train.shot == spec.shot),
        ("train.query_batch", spec.train.query_batch == spec.queries),
        ("train.seed", spec.train.seed == 0),
        ("train.classifier", spec.train.classifier == spec.classifier),
    ];
    for (k, consistent) in derived {
        let set = explicit.iter().any(|key| key == k || key.starts_with(&format!("{k}.")));
        if set && !consistent {
            errs.push(format!("`{k}` is derived from the top-level way/shot/queries/classifier settings"));
        }
    }
    spec.train.way = spec.way;
    spec.train.shot = spec.shot;
    spec.train.query_batch = spec.queries;
    spec.train.seed = 0;
    spec.train.classifier = spec.classifier;
    let object_key = format!("probabilities.{OBJECT}");
    if mode == Mode::Ablate && explicit.contains(&object_key) && spec.probabilities.get(OBJECT).is_some_and(|&p| p > 0.0) {
        errs.push(format!(
            "{object_key} must be 0 in ablation mode: the object attribute is held out of training"
        ));
    }
    if mode == Mode::Degrade && spec.benchmark.categories < spec.benchmark.split.total() {
        errs.push("degradation study needs every benchmark attribute fully split".into());
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(ResolvedConfig {
        text: spec.to_toml(),
        spec,
    })
}

fn parse_override(item: &str) -> std::result::Result<(Vec<String>, Value), String> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| format!("override `{item}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|k| k.is_empty()) {
        return Err(format!("override `{item}` has an empty key"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn merge(base: &mut Value, user: Table, prefix: &str, errs: &mut Vec<String>, explicit: &mut Vec<String>) {
    let open = OPEN_TABLES.contains(&prefix);
    let Value::Table(table) = base else {
        errs.push(format!("`{prefix}` is not a table"));
        return;
    };
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match table.get_mut(&key) {
            Some(slot @ Value::Table(_)) => match value {
                Value::Table(sub) => merge(slot, sub, &path, errs, explicit),
                _ => errs.push(format!("`{path}` must be a table")),
            },
            Some(slot) => {
                if matches!(value, Value::Table(_)) {
                    errs.push(format!("`{path}` must not be a table"));
                    continue;
                }
                let value = coerce(slot, value);
                *slot = value;
                explicit.push(path);
            }
            None if open => {
                table.insert(key, coerce(&Value::Float(0.0), value));
                explicit.push(path);
            }
            None => errs.push(format!("unknown key `{path}`")),
        }
    }
}

/// Integers written where a float is expected are widened.
fn coerce(slot: &Value, value: Value) -> Value {
    match (slot, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

/// Cache directory: the environment variable wins over the configured path.
pub fn cache_dir(configured: Option<PathBuf>) -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .or(configured)
        .unwrap_or_else(|| PathBuf::from("cache"))
}
