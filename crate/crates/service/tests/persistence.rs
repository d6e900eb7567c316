use std::sync::Arc;

use coilboard_core::grid::{CoilAddress, CoilGrid, Layer};
use coilboard_service::content::{BindingKind, CommandBinding, Configuration, ContentStore, Sequence, StaticElement, TargetSpec};
use coilboard_service::{Controller, ControllerOptions};
use proptest::prelude::*;

fn target() -> impl Strategy<Value = TargetSpec> {
    prop_oneof![
        (0u32..512).prop_map(|coil_id| TargetSpec::Id { coil_id }),
        (0u32..16, 0u32..16, any::<bool>()).prop_map(|(r, c, top)| {
            TargetSpec::Address(CoilAddress::new(0, if top { Layer::Top } else { Layer::Bottom }, r, c))
        }),
        (0.0f64..150.0, 0.0f64..150.0).prop_map(|(x_mm, y_mm)| TargetSpec::Point { x_mm, y_mm }),
    ]
}

fn element() -> impl Strategy<Value = StaticElement> {
    let points = prop::collection::vec((0.0f64..150.0, 0.0f64..150.0).prop_map(|(x, y)| [x, y]), 2..6);
    (points, any::<bool>()).prop_map(|(points, closed)| {
        if closed {
            StaticElement::Polygon { points }
        } else {
            StaticElement::Polyline { points }
        }
    })
}

/// Random valid content: targets that collide are dropped rather than
/// rejected, so every generated store is storable.
fn store() -> impl Strategy<Value = ContentStore> {
    let config = (prop::collection::vec(element(), 0..3), prop::collection::vec(target(), 0..8));
    (prop::collection::vec(config, 1..5), prop::collection::vec("[a-z][a-z ]{0,11}", 0..4)).prop_map(|(configs, triggers)| {
        let grid = CoilGrid::prototype();
        let mut store = ContentStore::default();
        for (i, (elements, targets)) in configs.into_iter().enumerate() {
            let mut kept: Vec<TargetSpec> = Vec::new();
            for t in targets {
                let mut trial = kept.clone();
                trial.push(t);
                if coilboard_service::content::resolve_targets(&grid, &trial).is_ok() {
                    kept = trial;
                }
            }
            let c = Configuration { name: format!("c{i}"), static_elements: elements, marker_targets: kept };
            store.put_configuration(&grid, c).unwrap();
        }
        let names: Vec<String> = store.configurations.keys().cloned().collect();
        store.put_sequence(Sequence { name: "seq".into(), steps: names.clone(), current_step: 0, started: false }).unwrap();
        for (i, t) in triggers.into_iter().enumerate() {
            let (configuration, kind) =
                if i % 2 == 0 { (names[i % names.len()].clone(), BindingKind::Render) } else { ("seq".into(), BindingKind::Sequence) };
            store.put_binding(CommandBinding { trigger: t, configuration, kind }).unwrap();
        }
        store
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn content_store_round_trips_through_disk(store in store()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("content.json");
        store.save(&path).unwrap();
        prop_assert_eq!(ContentStore::load(&path).unwrap(), store.clone());

        // a controller writing the store and a fresh one reading it agree
        let grid = Arc::new(CoilGrid::prototype());
        let mut a = Controller::new(grid.clone(), ControllerOptions::default()).with_store(&path).unwrap();
        a.load_content(store.clone()).unwrap();
        let b = Controller::new(grid, ControllerOptions::default()).with_store(&path).unwrap();
        prop_assert_eq!(b.content(), &store);
    }

    #[test]
    fn configurations_resolve_identically_after_reload(store in store()) {
        let grid = CoilGrid::prototype();
        let text = serde_json::to_string(&store).unwrap();
        let back: ContentStore = serde_json::from_str(&text).unwrap();
        for (name, c) in &store.configurations {
            let before = store.validate_configuration(&grid, c).unwrap();
            let after = back.validate_configuration(&grid, &back.configurations[name]).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}

#[test]
fn missing_store_file_starts_empty() {
    let dir = tempfile::tempdir().unwrap();
    let ctl = Controller::new(Arc::new(CoilGrid::prototype()), ControllerOptions::default())
        .with_store(dir.path().join("absent.json"))
        .unwrap();
    assert_eq!(ctl.content(), &ContentStore::default());
}

#[test]
fn corrupt_store_file_is_a_storage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("content.json");
    std::fs::write(&path, "{ not json").unwrap();
    let err = Controller::new(Arc::new(CoilGrid::prototype()), ControllerOptions::default()).with_store(&path).err().unwrap();
    assert_eq!(err.code(), "storage");
}
