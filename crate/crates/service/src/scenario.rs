//! Scripted runs against a controller: place markers, load content, then
//! apply a list of commands and report what happened.

use std::collections::BTreeSet;

use coilboard_core::sim::{MarkerId, MarkerState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content::{ContentStore, TargetSpec};
use crate::controller::{Controller, EventCounts, MarkerView, PlanSummary, StepDirection};
use crate::demo;
use crate::error::ServiceError;
use crate::history::HistoryEvent;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Load the bundled demo content before `content`.
    #[serde(default)]
    pub demo_content: bool,
    #[serde(default)]
    pub content: Option<ContentStore>,
    /// Number of markers placed on park slots before `markers`.
    #[serde(default)]
    pub parked_markers: usize,
    #[serde(default)]
    pub markers: Vec<TargetSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Render { configuration: String },
    Trigger { text: String },
    SequenceStep { sequence: String, direction: StepDirection },
    Move { marker: u32, target: TargetSpec },
    Park,
    Perturb { marker: u32, dx_mm: f64, dy_mm: f64 },
    SetCoil { coil_id: u32, on: bool },
    /// Scan the hold coils for this many passes.
    Idle { passes: u32 },
}

#[derive(Debug, Error)]
#[error("{}: {source}", match .index { Some(i) => format!("step {i}"), None => "setup".to_string() })]
pub struct ScenarioError {
    /// Zero-based step index; `None` while setting up.
    pub index: Option<usize>,
    #[source]
    pub source: ServiceError,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum StepOutcome {
    Plan(PlanSummary),
    Marker(MarkerView),
    Coil { coil_id: u32, on: bool, changed: bool },
    Idle { passes: u32 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub clock_ms: u64,
    pub steps: Vec<StepOutcome>,
    pub events: EventCounts,
    pub markers: Vec<MarkerView>,
    /// Markers with at least one ARRIVED record.
    pub arrived: Vec<MarkerId>,
    pub all_arrived: bool,
    pub all_parked: bool,
}

impl ScenarioReport {
    pub fn violations(&self) -> u64 {
        self.events.violations()
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        serde_json::from_str(text).map_err(|e| ServiceError::Validation(format!("scenario: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Loads content and places markers.
    pub fn setup(&self, ctl: &mut Controller) -> Result<(), ScenarioError> {
        let setup = |source| ScenarioError { index: None, source };
        let mut store = if self.demo_content { demo::demo_content(ctl.grid()).map_err(setup)? } else { ContentStore::default() };
        if let Some(extra) = &self.content {
            store.graphics.extend(extra.graphics.clone());
            store.configurations.extend(extra.configurations.clone());
            store.sequences.extend(extra.sequences.clone());
            store.bindings.extend(extra.bindings.clone());
        }
        if self.demo_content || self.content.is_some() {
            ctl.load_content(store).map_err(setup)?;
        }
        demo::place_parked(ctl, self.parked_markers).map_err(setup)?;
        for at in &self.markers {
            ctl.place_marker(at).map_err(setup)?;
        }
        Ok(())
    }

    pub fn run(&self, ctl: &mut Controller) -> Result<ScenarioReport, ScenarioError> {
        self.setup(ctl)?;
        let mut outcomes = Vec::with_capacity(self.steps.len());
        for (index, step) in self.steps.iter().enumerate() {
            let outcome = apply(ctl, step).map_err(|source| ScenarioError { index: Some(index), source })?;
            outcomes.push(outcome);
        }
        Ok(report(ctl, &self.name, outcomes))
    }
}

pub fn apply(ctl: &mut Controller, step: &Step) -> Result<StepOutcome, ServiceError> {
    Ok(match step {
        Step::Render { configuration } => StepOutcome::Plan(ctl.render(configuration)?),
        Step::Trigger { text } => StepOutcome::Plan(ctl.trigger(text)?),
        Step::SequenceStep { sequence, direction } => StepOutcome::Plan(ctl.sequence_step(sequence, *direction)?),
        Step::Move { marker, target } => StepOutcome::Plan(ctl.move_marker(*marker, target)?),
        Step::Park => StepOutcome::Plan(ctl.park()?),
        Step::Perturb { marker, dx_mm, dy_mm } => StepOutcome::Marker(ctl.perturb(*marker, *dx_mm, *dy_mm)?),
        Step::SetCoil { coil_id, on } => {
            let ack = ctl.set_coil(*coil_id, *on)?;
            StepOutcome::Coil { coil_id: ack.coil_id.0, on: ack.on, changed: ack.changed }
        }
        Step::Idle { passes } => {
            for _ in 0..*passes {
                ctl.idle_pass()?;
            }
            StepOutcome::Idle { passes: *passes }
        }
    })
}

pub fn report(ctl: &Controller, name: &str, steps: Vec<StepOutcome>) -> ScenarioReport {
    let arrived: BTreeSet<MarkerId> =
        ctl.history().records().iter().filter(|r| r.event == HistoryEvent::Arrived).map(|r| r.marker_id).collect();
    let markers: Vec<MarkerView> = ctl.sim().markers().map(MarkerView::from).collect();
    ScenarioReport {
        name: name.to_string(),
        clock_ms: ctl.sim().clock_ms(),
        steps,
        events: ctl.counts(),
        all_arrived: markers.iter().all(|m| arrived.contains(&m.id)),
        all_parked: markers.iter().all(|m| m.state == MarkerState::Parked),
        arrived: arrived.into_iter().collect(),
        markers,
    }
}

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 4] = ["temperature", "map", "hexagon", "contention"];

/// Bundled scenarios. The demos end parked; `contention` deliberately
/// powers one coil between two released markers.
pub fn builtin(name: &str) -> Option<Scenario> {
    let park = Step::Park;
    let scenario = |parked_markers, steps| Scenario { name: name.into(), demo_content: true, parked_markers, steps, ..Default::default() };
    Some(match name {
        "temperature" => scenario(12, vec![Step::Render { configuration: demo::TEMPERATURE.into() }, park]),
        "map" => scenario(
            3,
            vec![
                Step::Trigger { text: demo::COFFEE_TRIGGER.into() },
                Step::Trigger { text: demo::STATIONS_TRIGGER.into() },
                Step::Trigger { text: demo::COFFEE_TRIGGER.into() },
                park,
            ],
        ),
        "hexagon" => {
            let mut steps: Vec<Step> =
                (0..demo::HEXAGON_CORNERS).map(|_| Step::Trigger { text: demo::HEXAGON_TRIGGER.into() }).collect();
            steps.push(park);
            scenario(demo::HEXAGON_CORNERS, steps)
        }
        "contention" => {
            use coilboard_core::grid::{CoilAddress, Layer};
            let top = |row, col| TargetSpec::Address(CoilAddress::new(0, Layer::Top, row, col));
            Scenario {
                name: name.into(),
                markers: vec![top(4, 4), top(4, 5)],
                steps: vec![
                    Step::SetCoil { coil_id: 4 * 16 + 4, on: false },
                    Step::SetCoil { coil_id: 4 * 16 + 5, on: false },
                    Step::SetCoil { coil_id: 256 + 4 * 16 + 4, on: true },
                ],
                ..Default::default()
            }
        }
        _ => return None,
    })
}
