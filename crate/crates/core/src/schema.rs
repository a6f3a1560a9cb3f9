//! Multi-attribute data model, manifest I/O, category splits and the
//! attribute-constrained episode sampler.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub categories: Vec<String>,
    #[serde(default)]
    pub synthetic: bool,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, categories: Vec<String>, synthetic: bool) -> Self {
        Self {
            name: name.into(),
            categories,
            synthetic,
        }
    }

    pub fn category_index(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }
}

/// Ordered attribute set `A_0..A_m`; attribute `i` has `l_i` categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeSchema {
    attributes: Vec<AttributeDef>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeDef>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::SchemaViolation("schema has no attributes".into()));
        }
        let mut names = HashSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::SchemaViolation(format!(
                    "duplicate attribute `{}`",
                    attr.name
                )));
            }
            if attr.categories.is_empty() {
                return Err(Error::SchemaViolation(format!(
                    "attribute `{}` has no categories",
                    attr.name
                )));
            }
            let mut seen = HashSet::new();
            for c in &attr.categories {
                if !seen.insert(c.as_str()) {
                    return Err(Error::SchemaViolation(format!(
                        "duplicate category `{c}` in attribute `{}`",
                        attr.name
                    )));
                }
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&AttributeDef> {
        self.attribute(name)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown attribute `{name}`")))
    }

    pub fn validate_sample(&self, sample: &VideoSample) -> Result<()> {
        for (attr, cat) in &sample.labels {
            let def = self.attribute(attr).ok_or_else(|| {
                Error::SchemaViolation(format!("sample `{}`: unknown attribute `{attr}`", sample.id))
            })?;
            if def.category_index(cat).is_none() {
                return Err(Error::SchemaViolation(format!(
                    "sample `{}`: unknown category `{cat}` for attribute `{attr}`",
                    sample.id
                )));
            }
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for AttributeSchema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            attributes: Vec<AttributeDef>,
        }
        let raw = Raw::deserialize(d)?;
        AttributeSchema::new(raw.attributes).map_err(serde::de::Error::custom)
    }
}

/// One video: a payload reference plus a partial attribute→category map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSample {
    pub id: String,
    pub source: String,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl VideoSample {
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, attribute: impl Into<String>, category: impl Into<String>) -> Self {
        self.labels.insert(attribute.into(), category.into());
        self
    }

    pub fn label(&self, attribute: &str) -> Option<&str> {
        self.labels.get(attribute).map(String::as_str)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Schema {
        attributes: Vec<AttributeDef>,
    },
    Sample {
        id: String,
        source: String,
        #[serde(default)]
        labels: BTreeMap<String, String>,
    },
}

pub fn load_manifest(path: &Path) -> Result<(AttributeSchema, Vec<VideoSample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut schema = None;
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        match (record, &schema) {
            (Record::Schema { attributes }, None) => {
                schema = Some(AttributeSchema::new(attributes)?);
            }
            (Record::Schema { .. }, Some(_)) => {
                return Err(parse_err(lineno, "second schema record".into()));
            }
            (Record::Sample { .. }, None) => {
                return Err(parse_err(lineno, "sample record before schema".into()));
            }
            (Record::Sample { id, source, labels }, Some(schema)) => {
                let sample = VideoSample { id, source, labels };
                schema.validate_sample(&sample)?;
                if !ids.insert(sample.id.clone()) {
                    return Err(parse_err(lineno, format!("duplicate sample id `{}`", sample.id)));
                }
                samples.push(sample);
            }
        }
    }
    let schema = schema.ok_or_else(|| parse_err(0, "manifest has no schema record".into()))?;
    Ok((schema, samples))
}

pub fn write_manifest(path: &Path, schema: &AttributeSchema, samples: &[VideoSample]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp).map_err(io)?);
        let header = Record::Schema {
            attributes: schema.attributes().to_vec(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("schema serializes")).map_err(io)?;
        for s in samples {
            let rec = Record::Sample {
                id: s.id.clone(),
                source: s.source.clone(),
                labels: s.labels.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec).expect("sample serializes")).map_err(io)?;
        }
        out.flush().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub counts: BTreeMap<String, SplitCounts>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Partition {
    pub fn get(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> SplitCounts {
        SplitCounts::new(self.train.len(), self.val.len(), self.test.len())
    }
}

/// Per attribute: which categories belong to train, val and test.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub attributes: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn categories(&self, attribute: &str, split: Split) -> &[String] {
        self.attributes
            .get(attribute)
            .map(|p| p.get(split))
            .unwrap_or(&[])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        crate::write_atomic(path, text.as_bytes())
    }
}

/// Deterministic category-level split: each attribute's vocabulary is
/// shuffled on its own seeded stream, then cut into train/val/test.
pub fn split_categories(schema: &AttributeSchema, spec: &SplitSpec) -> Result<SplitAssignment> {
    let mut attributes = BTreeMap::new();
    for (name, counts) in &spec.counts {
        let def = schema.require(name)?;
        if counts.total() > def.categories.len() {
            return Err(Error::CountOverflow {
                attribute: name.clone(),
                requested: counts.total(),
                available: def.categories.len(),
            });
        }
        let mut rng = seed::keyed(spec.seed, name);
        let order = index::sample(&mut rng, def.categories.len(), counts.total());
        let picked: Vec<String> = order.iter().map(|i| def.categories[i].clone()).collect();
        let (train, rest) = picked.split_at(counts.train);
        let (val, test) = rest.split_at(counts.val);
        attributes.insert(
            name.clone(),
            Partition {
                train: train.to_vec(),
                val: val.to_vec(),
                test: test.to_vec(),
            },
        );
    }
    Ok(SplitAssignment {
        seed: spec.seed,
        attributes,
    })
}

/// N-way K-shot task drawn under a single attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub attribute: String,
    pub way: usize,
    pub shot: usize,
    pub categories: Vec<String>,
    /// `support[n]` holds the K sample ids of `categories[n]`.
    pub support: Vec<Vec<String>>,
    /// Query sample ids with the index of their true category.
    pub query: Vec<(String, usize)>,
}

/// Precomputed per-category sample lists for one (attribute, split).
#[derive(Debug, Clone)]
pub struct EpisodeSampler<'a> {
    attribute: String,
    pool: Vec<(&'a str, Vec<&'a str>)>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(
        samples: &'a [VideoSample],
        split: &'a SplitAssignment,
        attribute: &str,
        which: Split,
    ) -> Self {
        let mut by_category: BTreeMap<&str, Vec<&str>> = split
            .categories(attribute, which)
            .iter()
            .map(|c| (c.as_str(), Vec::new()))
            .collect();
        for s in samples {
            if let Some(ids) = s.label(attribute).and_then(|c| by_category.get_mut(c)) {
                ids.push(s.id.as_str());
            }
        }
        // keep split order, not alphabetical, so category indices follow the split file
        let pool = split
            .categories(attribute, which)
            .iter()
            .map(|c| (c.as_str(), by_category.remove(c.as_str()).unwrap_or_default()))
            .collect();
        Self {
            attribute: attribute.to_string(),
            pool,
        }
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Categories holding at least `shot + 1` samples.
    pub fn eligible(&self, shot: usize) -> Vec<&'a str> {
        self.pool
            .iter()
            .filter(|(_, ids)| ids.len() > shot)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn sample(&self, way: usize, shot: usize, queries: usize, rng: &mut Rng) -> Result<Episode> {
        if way == 0 || shot == 0 || queries == 0 {
            return Err(Error::InvalidExperiment("way, shot and query count must be positive".into()));
        }
        let eligible: Vec<usize> = (0..self.pool.len())
            .filter(|&i| self.pool[i].1.len() > shot)
            .collect();
        if eligible.len() < way {
            if let Some((c, ids)) = self.pool.iter().find(|(_, ids)| ids.len() <= shot) {
                if self.pool.len() >= way {
                    return Err(Error::InsufficientSamples {
                        attribute: self.attribute.clone(),
                        category: c.to_string(),
                        available: ids.len(),
                        needed: shot + 1,
                    });
                }
            }
            return Err(Error::InsufficientCategories {
                attribute: self.attribute.clone(),
                available: eligible.len(),
                needed: way,
            });
        }
        let chosen: Vec<usize> = index::sample(rng, eligible.len(), way)
            .iter()
            .map(|i| eligible[i])
            .collect();
        let mut categories = Vec::with_capacity(way);
        let mut support = Vec::with_capacity(way);
        let mut leftovers = Vec::with_capacity(way);
        for &ci in &chosen {
            let (name, ids) = &self.pool[ci];
            let picks: BTreeSet<usize> = index::sample(rng, ids.len(), shot).iter().collect();
            let mut shots: Vec<String> = Vec::with_capacity(shot);
            let mut rest: Vec<&str> = Vec::with_capacity(ids.len() - shot);
            for (j, id) in ids.iter().enumerate() {
                if picks.contains(&j) {
                    shots.push(id.to_string());
                } else {
                    rest.push(id);
                }
            }
            categories.push(name.to_string());
            support.push(shots);
            leftovers.push(rest);
        }
        let query = (0..queries)
            .map(|_| {
                let n = rng.random_range(0..way);
                let pool = &leftovers[n];
                (pool[rng.random_range(0..pool.len())].to_string(), n)
            })
            .collect();
        Ok(Episode {
            attribute: self.attribute.clone(),
            way,
            shot,
            categories,
            support,
            query,
        })
    }
}

pub fn sample_episode(
    samples: &[VideoSample],
    split: &SplitAssignment,
    attribute: &str,
    which: Split,
    way: usize,
    shot: usize,
    queries: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    EpisodeSampler::new(samples, split, attribute, which).sample(way, shot, queries, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema(cats: usize) -> AttributeSchema {
        AttributeSchema::new(vec![AttributeDef::new(
            "action",
            (0..cats).map(|i| format!("a{i}")).collect(),
            false,
        )])
        .unwrap()
    }

    fn toy_samples(cats: usize, per: usize) -> Vec<VideoSample> {
        (0..cats)
            .flat_map(|c| {
                (0..per).map(move |k| VideoSample::new(format!("v{c}_{k}"), "synthetic").with_label("action", format!("a{c}")))
            })
            .collect()
    }

    #[test]
    fn schema_rejects_duplicates() {
        let dup = AttributeSchema::new(vec![
            AttributeDef::new("a", vec!["x".into()], false),
            AttributeDef::new("a", vec!["y".into()], false),
        ]);
        assert!(matches!(dup, Err(Error::SchemaViolation(_))));
        let dup_cat = AttributeSchema::new(vec![AttributeDef::new("a", vec!["x".into(), "x".into()], false)]);
        assert!(matches!(dup_cat, Err(Error::SchemaViolation(_))));
        assert!(AttributeSchema::new(vec![]).is_err());
    }

    #[test]
    fn split_overflow() {
        let schema = toy_schema(10);
        let spec = SplitSpec {
            counts: BTreeMap::from([("action".to_string(), SplitCounts::new(6, 3, 2))]),
            seed: 1,
        };
        assert!(matches!(
            split_categories(&schema, &spec),
            Err(Error::CountOverflow { requested: 11, available: 10, .. })
        ));
    }

    #[test]
    fn episode_shapes_and_errors() {
        let schema = toy_schema(12);
        let samples = toy_samples(12, 4);
        let spec = SplitSpec {
            counts: BTreeMap::from([("action".to_string(), SplitCounts::new(6, 3, 3))]),
            seed: 3,
        };
        let split = split_categories(&schema, &spec).unwrap();
        let mut rng = seed::stream(0, 0);
        let ep = sample_episode(&samples, &split, "action", Split::Train, 5, 1, 25, &mut rng).unwrap();
        assert_eq!(ep.support.iter().map(Vec::len).sum::<usize>(), 5);
        assert_eq!(ep.query.len(), 25);
        let err = sample_episode(&samples, &split, "action", Split::Test, 5, 1, 25, &mut rng);
        assert!(matches!(err, Err(Error::InsufficientCategories { available: 3, needed: 5, .. })));
        let err = sample_episode(&samples, &split, "action", Split::Train, 5, 4, 5, &mut rng);
        assert!(matches!(err, Err(Error::InsufficientSamples { needed: 5, .. })));
    }

    #[test]
    fn thin_categories_are_skipped() {
        let schema = toy_schema(6);
        let mut samples = toy_samples(6, 3);
        samples.retain(|s| !(s.label("action") == Some("a0") && s.id != "v0_0"));
        let spec = SplitSpec {
            counts: BTreeMap::from([("action".to_string(), SplitCounts::new(6, 0, 0))]),
            seed: 0,
        };
        let split = split_categories(&schema, &spec).unwrap();
        let sampler = EpisodeSampler::new(&samples, &split, "action", Split::Train);
        assert_eq!(sampler.eligible(1).len(), 5);
        let mut rng = seed::stream(1, 1);
        for _ in 0..50 {
            let ep = sampler.sample(5, 1, 10, &mut rng).unwrap();
            assert!(!ep.categories.iter().any(|c| c == "a0"));
        }
    }
}
