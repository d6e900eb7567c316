//! Bundled demo content for the 16x16 prototype board: a monthly
//! temperature plot, a regional map with location bindings, a brain diagram
//! and a hexagon drawing guide.

use coilboard_core::grid::{CoilAddress, CoilGrid, Layer};
use coilboard_core::planner::park_slots;

use crate::content::{BindingKind, CommandBinding, Configuration, ContentStore, Graphic, Sequence, StaticElement, TargetSpec};
use crate::controller::Controller;
use crate::error::ServiceError;
use crate::import::import_svg;

pub const MAP_SVG: &str = include_str!("../assets/eastern_europe.svg");
pub const BRAIN_SVG: &str = include_str!("../assets/brain.svg");

/// Mean monthly temperatures in degrees Celsius, January first.
pub const MONTHLY_TEMPS_C: [i32; 12] = [-5, -3, 2, 9, 15, 19, 21, 20, 15, 9, 3, -2];

pub const TEMPERATURE: &str = "temperature-plot";
pub const COFFEE: &str = "coffee-shops";
pub const STATIONS: &str = "train-stations";
pub const BRAIN_REGIONS: &str = "brain-regions";
pub const HEXAGON: &str = "hexagon";
pub const COFFEE_TRIGGER: &str = "show me the nearest coffee shops";
pub const STATIONS_TRIGGER: &str = "show me the train stations";
pub const BRAIN_TRIGGER: &str = "show me the brain regions";
pub const HEXAGON_TRIGGER: &str = "next point";
pub const HEXAGON_CORNERS: usize = 6;

fn top(row: u32, col: u32) -> TargetSpec {
    TargetSpec::Address(CoilAddress::new(0, Layer::Top, row, col))
}

fn point(x_mm: f64, y_mm: f64) -> TargetSpec {
    TargetSpec::Point { x_mm, y_mm }
}

/// Row for a temperature: -5 C sits on row 1, each further 2 C one row up.
pub fn temperature_row(celsius: i32) -> u32 {
    ((celsius + 5) as f64 / 2.0).round() as u32 + 1
}

pub fn temperature_targets() -> Vec<TargetSpec> {
    MONTHLY_TEMPS_C.iter().enumerate().map(|(i, t)| top(temperature_row(*t), 2 + i as u32)).collect()
}

/// Corners of a regular hexagon centred on the board, snapped on resolve.
pub fn hexagon_corners() -> Vec<TargetSpec> {
    (0..HEXAGON_CORNERS)
        .map(|k| {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            point(75.0 + 40.0 * a.cos(), 80.0 + 40.0 * a.sin())
        })
        .collect()
}

fn config(name: &str, static_elements: Vec<StaticElement>, marker_targets: Vec<TargetSpec>) -> Configuration {
    Configuration { name: name.into(), static_elements, marker_targets }
}

fn hexagon_step(k: usize) -> String {
    format!("{HEXAGON}-{}", k + 1)
}

/// All demo content, validated against `grid`. Needs a board at least as
/// large as the 16x16 prototype.
pub fn demo_content(grid: &CoilGrid) -> Result<ContentStore, ServiceError> {
    let mut store = ContentStore::default();
    for (name, svg) in [("eastern-europe", MAP_SVG), ("brain", BRAIN_SVG)] {
        store.put_graphic(grid, Graphic { name: name.into(), elements: import_svg(svg)? })?;
    }

    // axes of the plot as static lines
    let axes = vec![
        StaticElement::Polyline { points: vec![[14.0, 140.0], [14.0, 10.0], [140.0, 10.0]] },
        StaticElement::Polyline { points: vec![[14.0, 15.0], [140.0, 15.0]] },
    ];
    store.put_configuration(grid, config(TEMPERATURE, axes, temperature_targets()))?;

    let map = || vec![StaticElement::Graphic { name: "eastern-europe".into() }];
    store.put_configuration(grid, config(COFFEE, map(), vec![point(52.0, 60.0), point(82.0, 64.0), point(100.0, 96.0)]))?;
    store.put_configuration(grid, config(STATIONS, map(), vec![point(40.0, 110.0), point(110.0, 120.0)]))?;

    let brain = vec![StaticElement::Graphic { name: "brain".into() }];
    let regions = vec![point(50.0, 45.0), point(100.0, 45.0), point(120.0, 75.0), point(60.0, 95.0)];
    store.put_configuration(grid, config(BRAIN_REGIONS, brain, regions))?;

    // each step adds one corner, so the drawing guide builds up point by point
    let corners = hexagon_corners();
    let outline: Vec<[f64; 2]> = corners
        .iter()
        .map(|c| match c {
            TargetSpec::Point { x_mm, y_mm } => [*x_mm, *y_mm],
            _ => unreachable!("corners are points"),
        })
        .collect();
    for k in 0..HEXAGON_CORNERS {
        let guide = vec![StaticElement::Polygon { points: outline.clone() }];
        store.put_configuration(grid, config(&hexagon_step(k), guide, corners[..=k].to_vec()))?;
    }
    store.put_sequence(Sequence {
        name: HEXAGON.into(),
        steps: (0..HEXAGON_CORNERS).map(hexagon_step).collect(),
        current_step: 0,
        started: false,
    })?;

    for (trigger, target, kind) in [
        (COFFEE_TRIGGER, COFFEE, BindingKind::Render),
        (STATIONS_TRIGGER, STATIONS, BindingKind::Render),
        (BRAIN_TRIGGER, BRAIN_REGIONS, BindingKind::Render),
        (HEXAGON_TRIGGER, HEXAGON, BindingKind::Sequence),
    ] {
        store.put_binding(CommandBinding { trigger: trigger.into(), configuration: target.into(), kind })?;
    }
    Ok(store)
}

/// Park slot targets for `n` markers, nearest the corner first.
pub fn parked_positions(grid: &CoilGrid, n: usize) -> Result<Vec<TargetSpec>, ServiceError> {
    let slots = park_slots(grid);
    if n > slots.len() {
        return Err(ServiceError::Validation(format!("{n} markers but only {} park slots", slots.len())));
    }
    Ok(slots[..n].iter().map(|c| TargetSpec::Id { coil_id: c.0 }).collect())
}

/// Places `n` markers on the park slots.
pub fn place_parked(ctl: &mut Controller, n: usize) -> Result<(), ServiceError> {
    for at in parked_positions(ctl.grid(), n)? {
        ctl.place_marker(&at)?;
    }
    Ok(())
}
