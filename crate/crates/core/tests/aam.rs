use std::collections::BTreeSet;

use aapm::aam::{
    assign_attributes, build_multikinetics, fixture, frame_alignment, geometry_categories, inject_feature_overlay,
    object_categories, overlay_mask, render_overlay, AssignmentConfig, KineticsLayout, OverlayKind, OverlaySpec,
    Placement, ACTION, GEOMETRY, OBJECT, SCENE,
};
use aapm::encoder::{Encoder, SyntheticEncoder, SyntheticEncoderConfig};
use aapm::error::Error;
use aapm::schema::{load_manifest, AttributeDef, AttributeSchema, SplitAssignment, VideoSample};
use image::{Rgb, RgbImage};
use proptest::prelude::*;

fn schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        AttributeDef::new(ACTION, vec!["run".into(), "swim".into()], false),
        AttributeDef::new(GEOMETRY, geometry_categories(), true),
        AttributeDef::new(OBJECT, object_categories(), true),
    ])
    .unwrap()
}

fn config(p_geometry: f64, p_object: f64, seed: u64) -> AssignmentConfig {
    AssignmentConfig {
        probabilities: [(ACTION, 1.0), (GEOMETRY, p_geometry), (OBJECT, p_object)]
            .into_iter()
            .map(|(a, p)| (a.to_string(), p))
            .collect(),
        seed,
    }
}

#[test]
fn half_probability_frequency() {
    let s = schema();
    let cfg = config(0.5, 0.5, 4);
    let hits = (0..10_000)
        .filter(|i| {
            let v = VideoSample::new(format!("v{i}"), "x").with_label(ACTION, "run");
            assign_attributes(&v, &s, &cfg).sample.label(GEOMETRY).is_some()
        })
        .count();
    assert!((4870..=5130).contains(&hits), "{hits}");
}

#[test]
fn injection_moves_frames_toward_category() {
    let s = schema();
    let enc = SyntheticEncoder::new(SyntheticEncoderConfig::default(), &s).unwrap();
    let v = VideoSample::new("clip", "x").with_label(ACTION, "swim");
    let f = enc.encode_video(&v).unwrap();
    let spec = OverlaySpec {
        kind: OverlayKind::Geometry,
        category: geometry_categories()[17].clone(),
        placement: Placement { cx: 0.5, cy: 0.5, scale: 0.2 },
        opacity: 1.0,
    };
    let u = enc.basis(GEOMETRY, &spec.category).unwrap().clone();
    let before = frame_alignment(&f, &u);
    let weight = 0.8;
    let after = frame_alignment(&inject_feature_overlay(&f, &spec, &enc, weight).unwrap(), &u);
    assert_eq!(after.len(), 8);
    for (b, a) in before.iter().zip(&after) {
        // unit frame r, unit u: cos(r + w u, u) = (r·u + w) / sqrt(1 + 2 w r·u + w²)
        let want = (b + weight) / (1.0 + 2.0 * weight * b + weight * weight).sqrt();
        assert!(a > b);
        assert!((a - want).abs() < 1e-6, "{a} vs {want}");
    }
    assert_eq!(inject_feature_overlay(&f, &spec, &enc, 0.0).unwrap(), f);
    let bad = OverlaySpec { category: "no-such-shape".into(), ..spec };
    assert!(matches!(inject_feature_overlay(&f, &bad, &enc, 1.0), Err(Error::UnknownCategory { .. })));
}

fn toy() -> (Vec<VideoSample>, Vec<aapm::aam::Annotation>, KineticsLayout) {
    let (_, samples, annotations) = fixture(10, 20);
    let scenes: BTreeSet<&String> = annotations.iter().map(|a| &a.scene).collect();
    let layout = KineticsLayout::proportional(10, scenes.len(), 2);
    (samples, annotations, layout)
}

#[test]
fn toy_builder_validates_and_round_trips() {
    let (samples, annotations, layout) = toy();
    let built = build_multikinetics(&samples, &annotations, &AssignmentConfig::default(), &layout).unwrap();
    assert_eq!(built.samples.len(), 200);
    for (attr, want) in &layout.split.counts {
        assert_eq!(built.split.attributes[attr].sizes(), *want);
    }
    assert!(!built.eligible_5way["human-group"]);
    assert!(!built.eligible_5way["illumination"]);

    let dir = tempfile::tempdir().unwrap();
    built.write(dir.path()).unwrap();
    let (schema, loaded) = load_manifest(&dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(schema, built.schema);
    assert_eq!(loaded, built.samples);
    assert_eq!(SplitAssignment::load(&dir.path().join("splits.json")).unwrap(), built.split);
    assert!(loaded.iter().all(|s| s.label(SCENE).is_some()));
}

#[test]
fn missing_annotation_is_named() {
    let (samples, mut annotations, layout) = toy();
    let gone = annotations.remove(37).id;
    match build_multikinetics(&samples, &annotations, &AssignmentConfig::default(), &layout) {
        Err(Error::MissingAnnotation(id)) => assert_eq!(id, gone),
        other => panic!("{other:?}"),
    }
}

fn backdrop(w: u32, h: u32, salt: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let v = x.wrapping_mul(31).wrapping_add(y.wrapping_mul(17)).wrapping_add(salt);
        Rgb([(v % 251) as u8, (v / 3 % 241) as u8, (v / 7 % 239) as u8])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rendering_only_touches_the_mask(
        object in any::<bool>(),
        pick in 0usize..65,
        cx in 0.0f64..1.0,
        cy in 0.0f64..1.0,
        scale in 0.1f64..0.3,
        w in 24u32..80,
        h in 24u32..80,
    ) {
        let (kind, cats) = if object { (OverlayKind::Object, object_categories()) } else { (OverlayKind::Geometry, geometry_categories()) };
        let spec = OverlaySpec { kind, category: cats[pick % cats.len()].clone(), placement: Placement { cx, cy, scale }, opacity: 1.0 };
        let frames = vec![backdrop(w, h, 0), backdrop(w, h, 99)];
        let out = render_overlay(&frames, &spec).unwrap();
        prop_assert_eq!(&out, &render_overlay(&frames, &spec).unwrap());
        let mask = overlay_mask(&spec, w, h).unwrap();
        prop_assert!(mask.iter().any(|&m| m));
        for (before, after) in frames.iter().zip(&out) {
            for (i, (a, b)) in before.pixels().zip(after.pixels()).enumerate() {
                if !mask[i] {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn assignment_is_a_function_of_id_and_seed(id in "[a-z0-9]{1,12}", seed in any::<u64>(), pg in 0.0f64..=1.0, po in 0.0f64..=1.0) {
        let s = schema();
        let v = VideoSample::new(id, "x").with_label(ACTION, "run");
        let cfg = config(pg, po, seed);
        let a = assign_attributes(&v, &s, &cfg);
        prop_assert_eq!(&a, &assign_attributes(&v, &s, &cfg));
        prop_assert_eq!(a.sample.label(ACTION), Some("run"));
        for o in &a.overlays {
            let attr = o.kind.attribute();
            prop_assert_eq!(a.sample.label(attr), Some(o.category.as_str()));
            prop_assert!(s.attribute(attr).unwrap().category_index(&o.category).is_some());
        }
        prop_assert_eq!(a.overlays.len(), a.sample.labels.len() - 1);
    }
}
