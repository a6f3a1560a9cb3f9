use aapm_web::{alignment_view, confusion, overlay_categories, overlay_pixels};

#[test]
fn alignment_mass_and_path() {
    let v = alignment_view(3, 6, 8, 0.4, 0.1, false).unwrap();
    assert_eq!(v.cost.len(), 6);
    assert_eq!(v.cost[0].len(), 8);
    // Strict boundary: both corners lie on every path.
    assert!((v.path[0][0] - 1.0).abs() < 1e-6);
    assert!((v.path[5][7] - 1.0).abs() < 1e-6);
    assert!(v.distance <= v.hard_distance + 1e-9);
    let row_mass: f64 = v.path.iter().flatten().sum();
    assert!(row_mass >= 8.0 - 1e-6 && row_mass <= 14.0 + 1e-6);
}

#[test]
fn alignment_rejects_bad_input() {
    assert!(alignment_view(1, 0, 4, 0.0, 0.1, true).is_err());
    assert!(alignment_view(1, 4, 4, 1.5, 0.1, true).is_err());
    assert!(alignment_view(1, 4, 4, 0.0, 0.0, true).is_err());
}

#[test]
fn confusion_orders_bayes_first() {
    let rows = confusion(1, 2, 40, 1).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.bayes >= r.frozen - 0.05, "{r:?}");
        assert!((0.0..=1.0).contains(&r.frozen));
    }
    assert!(confusion(1, 5, 10, 1).is_err());
}

#[test]
fn overlay_draws_inside_its_box() {
    assert_eq!(overlay_categories("geometry").unwrap().len(), 65);
    assert_eq!(overlay_categories("object").unwrap().len(), 15);
    assert!(overlay_categories("scene").is_err());
    let cat = &overlay_categories("geometry").unwrap()[0];
    let px = overlay_pixels("geometry", cat, 0.5, 0.5, 0.3, 64).unwrap();
    assert_eq!(px.len(), 64 * 64 * 4);
    let plain = overlay_pixels("geometry", cat, 0.5, 0.5, 0.3, 64).unwrap();
    assert_eq!(px, plain);
    assert!(overlay_pixels("geometry", "mauve blob", 0.5, 0.5, 0.3, 64).is_err());
    assert!(overlay_pixels("object", "ball", 0.5, 0.5, 0.0, 64).is_err());
}
