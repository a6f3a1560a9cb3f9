//! Attribute Assignment Method.
//!
//! Synthetic attributes (colored geometry, object sprites) are attached to
//! samples at random with per-attribute probabilities, either as pixel
//! overlays or directly in synthetic feature space. The Multi-Kinetics
//! builder combines an action manifest, human annotations and these
//! synthetic attributes into one multi-attribute dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use image::{Rgb, RgbImage, RgbaImage};
use ndarray::Array1;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoder::synthetic::SyntheticEncoder;
use crate::encoder::VisualFeature;
use crate::error::{Error, Result};
use crate::schema::{split_categories, AttributeDef, AttributeSchema, SplitAssignment, SplitCounts, SplitSpec, VideoSample};
use crate::seed;

pub const ACTION: &str = "action";
pub const SCENE: &str = "scene";
pub const HUMAN_GROUP: &str = "human-group";
pub const ILLUMINATION: &str = "illumination";
pub const GEOMETRY: &str = "geometry";
pub const OBJECT: &str = "object";

const SALT_ASSIGN: u64 = 0xA55_16E;

const GEOMETRY_TABLE: &str = include_str!("../assets/geometry.json");

pub const OBJECTS: [&str; 15] = [
    "ball", "cup", "book", "phone", "bottle", "hat", "chair", "umbrella", "clock", "key", "lamp", "shoe", "bag",
    "guitar", "plant",
];

const SPRITES: [&[u8]; 15] = [
    include_bytes!("../assets/objects/ball.png"),
    include_bytes!("../assets/objects/cup.png"),
    include_bytes!("../assets/objects/book.png"),
    include_bytes!("../assets/objects/phone.png"),
    include_bytes!("../assets/objects/bottle.png"),
    include_bytes!("../assets/objects/hat.png"),
    include_bytes!("../assets/objects/chair.png"),
    include_bytes!("../assets/objects/umbrella.png"),
    include_bytes!("../assets/objects/clock.png"),
    include_bytes!("../assets/objects/key.png"),
    include_bytes!("../assets/objects/lamp.png"),
    include_bytes!("../assets/objects/shoe.png"),
    include_bytes!("../assets/objects/bag.png"),
    include_bytes!("../assets/objects/guitar.png"),
    include_bytes!("../assets/objects/plant.png"),
];

#[derive(Debug, Deserialize)]
struct GeometryTable {
    shapes: Vec<String>,
    colors: Vec<ColorDef>,
}

#[derive(Debug, Deserialize)]
struct ColorDef {
    name: String,
    rgb: [u8; 3],
}

fn geometry_table() -> &'static GeometryTable {
    static TABLE: OnceLock<GeometryTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t: GeometryTable = serde_json::from_str(GEOMETRY_TABLE).expect("bundled geometry table parses");
        assert_eq!(t.shapes.len() * t.colors.len(), 65, "geometry vocabulary must have 65 categories");
        t
    })
}

/// The 65 geometry categories, `"<color> <shape>"`, colors outermost.
pub fn geometry_categories() -> Vec<String> {
    let t = geometry_table();
    t.colors
        .iter()
        .flat_map(|c| t.shapes.iter().map(move |s| format!("{} {}", c.name, s)))
        .collect()
}

pub fn object_categories() -> Vec<String> {
    OBJECTS.iter().map(|s| s.to_string()).collect()
}

fn parse_geometry(category: &str) -> Option<(&'static str, [u8; 3])> {
    let t = geometry_table();
    let (color, shape) = category.split_once(' ')?;
    let c = t.colors.iter().find(|c| c.name == color)?;
    let s = t.shapes.iter().find(|s| s.as_str() == shape)?;
    Some((s.as_str(), c.rgb))
}

fn sprite(category: &str) -> Option<&'static RgbaImage> {
    static DECODED: OnceLock<HashMap<&'static str, RgbaImage>> = OnceLock::new();
    DECODED
        .get_or_init(|| {
            OBJECTS
                .iter()
                .zip(SPRITES)
                .map(|(name, bytes)| {
                    let img = image::load_from_memory(bytes).expect("bundled sprite decodes");
                    (*name, img.to_rgba8())
                })
                .collect()
        })
        .get(category)
}

/// Per-attribute assignment probabilities. Attributes not listed are never
/// assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentConfig {
    pub probabilities: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self {
            probabilities: [(ACTION, 1.0), (SCENE, 0.5), (GEOMETRY, 0.5), (OBJECT, 0.5)]
                .into_iter()
                .map(|(a, p)| (a.to_string(), p))
                .collect(),
            seed: 0,
        }
    }
}

impl AssignmentConfig {
    pub fn probability(&self, attribute: &str) -> f64 {
        self.probabilities.get(attribute).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, schema: Option<&AttributeSchema>) -> Vec<String> {
        let mut errs = Vec::new();
        for (attr, p) in &self.probabilities {
            if !(0.0..=1.0).contains(p) {
                errs.push(format!("assignment.probabilities.{attr} must lie in [0, 1], got {p}"));
            }
            if let Some(schema) = schema {
                if schema.attribute(attr).is_none() {
                    errs.push(format!("assignment.probabilities.{attr}: attribute not in schema"));
                }
            }
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    Geometry,
    Object,
}

impl OverlayKind {
    pub fn attribute(self) -> &'static str {
        match self {
            OverlayKind::Geometry => GEOMETRY,
            OverlayKind::Object => OBJECT,
        }
    }

    pub fn for_attribute(name: &str) -> Option<Self> {
        match name {
            GEOMETRY => Some(OverlayKind::Geometry),
            OBJECT => Some(OverlayKind::Object),
            _ => None,
        }
    }
}

/// Overlay center as fractions of the frame, side length as a fraction of
/// the frame height. Fixed for all frames of a video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cx: f64,
    pub cy: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySpec {
    pub kind: OverlayKind,
    pub category: String,
    pub placement: Placement,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub sample: VideoSample,
    pub overlays: Vec<OverlaySpec>,
}

/// Independently attaches each synthetic attribute of `schema` with its
/// configured probability. The draw depends only on (sample id, seed).
pub fn assign_attributes(sample: &VideoSample, schema: &AttributeSchema, config: &AssignmentConfig) -> Assignment {
    let mut rng = seed::keyed(seed::derive(config.seed, SALT_ASSIGN), &sample.id);
    let mut out = sample.clone();
    let mut overlays = Vec::new();
    for attr in schema.attributes().iter().filter(|a| a.synthetic) {
        // Draw everything up front so one attribute's outcome never shifts
        // another's stream.
        let u: f64 = rng.random();
        let pick = rng.random_range(0..attr.categories.len());
        let placement = Placement {
            cx: rng.random(),
            cy: rng.random(),
            scale: rng.random_range(0.1..0.3),
        };
        if u >= config.probability(&attr.name) {
            continue;
        }
        let category = attr.categories[pick].clone();
        out.labels.insert(attr.name.clone(), category.clone());
        if let Some(kind) = OverlayKind::for_attribute(&attr.name) {
            overlays.push(OverlaySpec {
                kind,
                category,
                placement,
                opacity: 1.0,
            });
        }
    }
    Assignment {
        sample: out,
        overlays,
    }
}

/// Pixel box `(left, top, side)` occupied by the overlay, clamped on-canvas.
pub fn overlay_bounds(spec: &OverlaySpec, width: u32, height: u32) -> Result<(u32, u32, u32)> {
    let p = spec.placement;
    if !(p.scale > 0.0 && p.scale.is_finite()) {
        return Err(Error::InvalidSpec(format!("scale must be positive, got {}", p.scale)));
    }
    if !(spec.opacity > 0.0 && spec.opacity <= 1.0) {
        return Err(Error::InvalidSpec(format!("opacity must lie in (0, 1], got {}", spec.opacity)));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidSpec("empty frame".into()));
    }
    let side = ((p.scale * height as f64).round() as u32).clamp(1, width.min(height));
    let place = |c: f64, extent: u32| {
        let start = (c.clamp(0.0, 1.0) * extent as f64 - side as f64 / 2.0).round();
        (start.max(0.0) as u32).min(extent - side)
    };
    Ok((place(p.cx, width), place(p.cy, height), side))
}

fn polygon(points: &[(f64, f64)], u: f64, v: f64) -> bool {
    let mut inside = false;
    let mut j = points.len() - 1;
    for i in 0..points.len() {
        let (xi, yi) = points[i];
        let (xj, yj) = points[j];
        if (yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn regular(n: usize, radius: impl Fn(usize) -> f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let a = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (radius(k) * a.cos(), radius(k) * a.sin())
        })
        .collect()
}

/// Shape membership in box coordinates `u, v ∈ [-1, 1]`, `v` pointing down.
fn shape_contains(shape: &str, u: f64, v: f64) -> bool {
    let r2 = u * u + v * v;
    match shape {
        "circle" => r2 <= 1.0,
        "ring" => (0.36..=1.0).contains(&r2),
        "ellipse" => u * u + (v / 0.6).powi(2) <= 1.0,
        "square" => u.abs() <= 0.9 && v.abs() <= 0.9,
        "hollow square" => u.abs().max(v.abs()) <= 0.9 && u.abs().max(v.abs()) >= 0.5,
        "triangle" => polygon(&[(0.0, -1.0), (1.0, 0.9), (-1.0, 0.9)], u, v),
        "inverted triangle" => polygon(&[(0.0, 1.0), (1.0, -0.9), (-1.0, -0.9)], u, v),
        "diamond" => u.abs() + v.abs() <= 1.0,
        "pentagon" => polygon(&regular(5, |_| 1.0), u, v),
        "hexagon" => polygon(&regular(6, |_| 1.0), u, v),
        "star" => polygon(&regular(10, |k| if k % 2 == 0 { 1.0 } else { 0.45 }), u, v),
        "cross" => u.abs() <= 0.3 || v.abs() <= 0.3,
        "x-cross" => (u - v).abs() <= 0.4 || (u + v).abs() <= 0.4,
        _ => false,
    }
}

/// Per-pixel overlay coverage inside the bounding box: `(x, y, rgb, alpha)`.
fn coverage(spec: &OverlaySpec, width: u32, height: u32) -> Result<Vec<(u32, u32, [u8; 3], f64)>> {
    let (left, top, side) = overlay_bounds(spec, width, height)?;
    let mut out = Vec::new();
    match spec.kind {
        OverlayKind::Geometry => {
            let (shape, rgb) = parse_geometry(&spec.category).ok_or_else(|| Error::UnknownCategory {
                attribute: GEOMETRY.into(),
                category: spec.category.clone(),
            })?;
            for dy in 0..side {
                for dx in 0..side {
                    let u = 2.0 * (dx as f64 + 0.5) / side as f64 - 1.0;
                    let v = 2.0 * (dy as f64 + 0.5) / side as f64 - 1.0;
                    if shape_contains(shape, u, v) {
                        out.push((left + dx, top + dy, rgb, spec.opacity));
                    }
                }
            }
        }
        OverlayKind::Object => {
            let img = sprite(&spec.category).ok_or_else(|| Error::UnknownCategory {
                attribute: OBJECT.into(),
                category: spec.category.clone(),
            })?;
            for dy in 0..side {
                for dx in 0..side {
                    let sx = (dx as u64 * img.width() as u64 / side as u64) as u32;
                    let sy = (dy as u64 * img.height() as u64 / side as u64) as u32;
                    let px = img.get_pixel(sx, sy).0;
                    if px[3] > 0 {
                        let a = spec.opacity * px[3] as f64 / 255.0;
                        out.push((left + dx, top + dy, [px[0], px[1], px[2]], a));
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidSpec(format!("overlay `{}` covers no pixel", spec.category)));
    }
    Ok(out)
}

/// Boolean mask (row-major) of the pixels the overlay writes to.
pub fn overlay_mask(spec: &OverlaySpec, width: u32, height: u32) -> Result<Vec<bool>> {
    let mut mask = vec![false; (width * height) as usize];
    for (x, y, _, _) in coverage(spec, width, height)? {
        mask[(y * width + x) as usize] = true;
    }
    Ok(mask)
}

/// Draws the overlay on every frame at the same placement. Pixels outside
/// the mask are copied through untouched.
pub fn render_overlay(frames: &[RgbImage], spec: &OverlaySpec) -> Result<Vec<RgbImage>> {
    frames
        .iter()
        .map(|frame| {
            let mut out = frame.clone();
            for (x, y, rgb, a) in coverage(spec, frame.width(), frame.height())? {
                let base = frame.get_pixel(x, y).0;
                let mix = |i: usize| (a * rgb[i] as f64 + (1.0 - a) * base[i] as f64).round() as u8;
                out.put_pixel(x, y, Rgb([mix(0), mix(1), mix(2)]));
            }
            Ok(out)
        })
        .collect()
}

pub fn decode_frames(encoded: &[Vec<u8>]) -> Result<Vec<RgbImage>> {
    encoded
        .iter()
        .enumerate()
        .map(|(i, bytes)| {
            image::load_from_memory(bytes)
                .map(|img| img.to_rgb8())
                .map_err(|e| Error::DecodeFailure(format!("frame {i}: {e}")))
        })
        .collect()
}

/// Reads every `.png` in `dir`, sorted by file name.
pub fn load_frames(dir: &Path) -> Result<Vec<RgbImage>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let bytes = paths
        .iter()
        .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
        .collect::<Result<Vec<_>>>()?;
    decode_frames(&bytes)
}

/// Feature-space analog of an overlay: adds `weight · u(category)` to every
/// frame and renormalizes.
pub fn inject_feature_overlay(
    feature: &VisualFeature,
    spec: &OverlaySpec,
    encoder: &SyntheticEncoder,
    weight: f64,
) -> Result<VisualFeature> {
    let u = encoder.basis(spec.kind.attribute(), &spec.category)?;
    if weight == 0.0 {
        return Ok(feature.clone());
    }
    let mut tokens = feature.tokens.clone();
    for mut row in tokens.rows_mut() {
        row.scaled_add(weight, u);
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    Ok(VisualFeature {
        sample_id: feature.sample_id.clone(),
        tokens,
    })
}

/// Human annotation of one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub scene: String,
    pub human_group: String,
    pub illumination: String,
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let mut buf = Vec::new();
    for a in annotations {
        writeln!(buf, "{}", serde_json::to_string(a).expect("annotation serializes")).expect("write to vec");
    }
    crate::write_atomic(path, &buf)
}

/// Expected vocabulary sizes and the category split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsLayout {
    pub vocab: BTreeMap<String, usize>,
    pub split: SplitSpec,
}

impl KineticsLayout {
    pub fn paper(seed: u64) -> Self {
        Self::proportional(100, 34, seed)
    }

    /// Paper split ratios applied to `actions` action and `scenes` scene
    /// categories. At 100 and 34 this is exactly the paper layout.
    pub fn proportional(actions: usize, scenes: usize, seed: u64) -> Self {
        let cut = |n: usize, train: usize, val: usize, total: usize| {
            let tr = (n * train + total / 2) / total;
            let va = (n * val + total / 2) / total;
            SplitCounts::new(tr, va, n - tr - va)
        };
        let vocab = [(ACTION, actions), (SCENE, scenes), (HUMAN_GROUP, 4), (ILLUMINATION, 2), (GEOMETRY, 65), (OBJECT, 15)]
            .into_iter()
            .map(|(a, n)| (a.to_string(), n))
            .collect();
        let counts = [
            (ACTION, cut(actions, 64, 12, 100)),
            (SCENE, cut(scenes, 19, 5, 34)),
            (GEOMETRY, SplitCounts::new(41, 8, 16)),
            (OBJECT, SplitCounts::new(5, 5, 5)),
        ]
        .into_iter()
        .map(|(a, c)| (a.to_string(), c))
        .collect();
        Self {
            vocab,
            split: SplitSpec { counts, seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiKinetics {
    pub schema: AttributeSchema,
    pub samples: Vec<VideoSample>,
    pub split: SplitAssignment,
    /// Whether the attribute has at least 5 test categories.
    pub eligible_5way: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub vocab: BTreeMap<String, usize>,
    pub splits: BTreeMap<String, SplitCounts>,
    pub eligible_5way: BTreeMap<String, bool>,
}

impl MultiKinetics {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            samples: self.samples.len(),
            vocab: self
                .schema
                .attributes()
                .iter()
                .map(|a| (a.name.clone(), a.categories.len()))
                .collect(),
            splits: self
                .split
                .attributes
                .iter()
                .map(|(a, p)| (a.clone(), p.sizes()))
                .collect(),
            eligible_5way: self.eligible_5way.clone(),
        }
    }

    /// Writes `manifest.jsonl`, `splits.json` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::schema::write_manifest(&dir.join("manifest.jsonl"), &self.schema, &self.samples)?;
        self.split.save(&dir.join("splits.json"))?;
        let summary = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        crate::write_atomic(&dir.join("summary.json"), summary.as_bytes())
    }
}

/// Checks a split against a schema and layout: partitions disjoint, drawn
/// from the vocabulary, sized as the layout requests.
pub fn validate_split(
    schema: &AttributeSchema,
    split: &SplitAssignment,
    layout: &KineticsLayout,
) -> Result<BTreeMap<String, SplitCounts>> {
    let mut sizes = BTreeMap::new();
    for (attr, want) in &layout.split.counts {
        let part = split
            .attributes
            .get(attr)
            .ok_or_else(|| Error::CountMismatch(format!("split has no entry for `{attr}`")))?;
        let def = schema.require(attr)?;
        let mut seen = BTreeSet::new();
        for c in part.train.iter().chain(&part.val).chain(&part.test) {
            if def.category_index(c).is_none() {
                return Err(Error::SchemaViolation(format!("split category `{c}` not in `{attr}`")));
            }
            if !seen.insert(c) {
                return Err(Error::CountMismatch(format!("category `{c}` of `{attr}` sits in two splits")));
            }
        }
        if part.sizes() != *want {
            return Err(Error::CountMismatch(format!(
                "`{attr}` split is {:?}, layout expects {:?}",
                part.sizes(),
                want
            )));
        }
        sizes.insert(attr.clone(), part.sizes());
    }
    Ok(sizes)
}

fn vocabulary(values: impl Iterator<Item = String>) -> Vec<String> {
    values.collect::<BTreeSet<_>>().into_iter().collect()
}

/// Merges an action manifest with scene / human-group / illumination
/// annotations, assigns the synthetic attributes, and splits categories.
pub fn build_multikinetics(
    source: &[VideoSample],
    annotations: &[Annotation],
    config: &AssignmentConfig,
    layout: &KineticsLayout,
) -> Result<MultiKinetics> {
    let by_id: HashMap<&str, &Annotation> = annotations.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut annotated = Vec::with_capacity(source.len());
    for s in source {
        let ann = by_id
            .get(s.id.as_str())
            .ok_or_else(|| Error::MissingAnnotation(s.id.clone()))?;
        if s.label(ACTION).is_none() {
            return Err(Error::SchemaViolation(format!("sample `{}` has no action label", s.id)));
        }
        annotated.push((s, *ann));
    }

    let actions = vocabulary(annotated.iter().filter_map(|(s, _)| s.label(ACTION).map(String::from)));
    let scenes = vocabulary(annotated.iter().map(|(_, a)| a.scene.clone()));
    let groups = vocabulary(annotated.iter().map(|(_, a)| a.human_group.clone()));
    let lights = vocabulary(annotated.iter().map(|(_, a)| a.illumination.clone()));
    let schema = AttributeSchema::new(vec![
        AttributeDef::new(ACTION, actions, false),
        AttributeDef::new(SCENE, scenes, false),
        AttributeDef::new(HUMAN_GROUP, groups, false),
        AttributeDef::new(ILLUMINATION, lights, false),
        AttributeDef::new(GEOMETRY, geometry_categories(), true),
        AttributeDef::new(OBJECT, object_categories(), true),
    ])?;
    for def in schema.attributes() {
        if let Some(&want) = layout.vocab.get(&def.name) {
            if def.categories.len() != want {
                return Err(Error::CountMismatch(format!(
                    "`{}` has {} categories, layout expects {want}",
                    def.name,
                    def.categories.len()
                )));
            }
        }
    }
    let errs = config.validate(Some(&schema));
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let samples: Vec<VideoSample> = annotated
        .iter()
        .map(|(s, a)| {
            let base = VideoSample::new(s.id.clone(), s.source.clone())
                .with_label(ACTION, s.label(ACTION).expect("checked above"))
                .with_label(SCENE, a.scene.clone())
                .with_label(HUMAN_GROUP, a.human_group.clone())
                .with_label(ILLUMINATION, a.illumination.clone());
            assign_attributes(&base, &schema, config).sample
        })
        .collect();

    let split = split_categories(&schema, &layout.split)?;
    validate_split(&schema, &split, layout)?;
    let eligible_5way = schema
        .attributes()
        .iter()
        .map(|a| {
            let test = split.categories(&a.name, crate::schema::Split::Test).len();
            (a.name.clone(), test >= 5)
        })
        .collect();
    Ok(MultiKinetics {
        schema,
        samples,
        split,
        eligible_5way,
    })
}

const SCENES: [&str; 34] = [
    "bar", "bathroom", "beach", "bedroom", "church", "classroom", "desert", "farm", "field", "forest", "garden", "gym",
    "hospital", "kitchen", "lab", "lake", "library", "living room", "mountain", "office", "park", "parking lot",
    "playground", "pool", "restaurant", "river", "road", "shop", "snowfield", "stadium", "stage", "street", "studio",
    "warehouse",
];
const GROUPS: [&str; 4] = ["single", "pair", "small group", "crowd"];
const LIGHTS: [&str; 2] = ["day", "night"];

/// Paper-shaped input: 100 action categories × 100 videos, annotated so
/// that every scene, group and illumination value occurs.
pub fn paper_fixture() -> (AttributeSchema, Vec<VideoSample>, Vec<Annotation>) {
    fixture(100, 100)
}

/// `actions × per_action` videos with cycling annotations.
pub fn fixture(actions: usize, per_action: usize) -> (AttributeSchema, Vec<VideoSample>, Vec<Annotation>) {
    let names: Vec<String> = (0..actions).map(|a| format!("action-{a:03}")).collect();
    let schema = AttributeSchema::new(vec![AttributeDef::new(ACTION, names.clone(), false)])
        .expect("fixture schema is valid");
    let mut samples = Vec::with_capacity(actions * per_action);
    let mut annotations = Vec::with_capacity(actions * per_action);
    for (a, name) in names.iter().enumerate() {
        for v in 0..per_action {
            let id = format!("k400-{a:03}-{v:03}");
            samples.push(VideoSample::new(id.clone(), format!("videos/{id}")).with_label(ACTION, name.clone()));
            annotations.push(Annotation {
                id,
                scene: SCENES[(a + 7 * v) % SCENES.len()].to_string(),
                human_group: GROUPS[(a + v) % GROUPS.len()].to_string(),
                illumination: LIGHTS[(3 * a + v) % LIGHTS.len()].to_string(),
            });
        }
    }
    (schema, samples, annotations)
}

/// Unit-norm basis cosine of each frame, used to check injections.
pub fn frame_alignment(feature: &VisualFeature, direction: &Array1<f64>) -> Vec<f64> {
    feature
        .tokens
        .rows()
        .into_iter()
        .map(|r| r.dot(direction) / r.dot(&r).sqrt())
        .collect()
}
