//! Synchronous core of the service. Every mutation of markers, coils or
//! content goes through a [`Controller`]; the executor thread owns one and
//! the CLI drives one directly for headless runs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use coilboard_core::driver::{schedule_ids, DEFAULT_DWELL_MS};
use coilboard_core::grid::{CoilGrid, CoilId, Point};
use coilboard_core::planner::{
    assign_parking, hop_distances, passes_per_tick, plan_multi, MotionPlan, PlanStatus, PlannerOptions,
};
use coilboard_core::sim::{Marker, MarkerId, MarkerState, SimEvent, SimParams, SimState, SimStats, TraceRow};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, SimBackend};
use crate::content::{
    check_name, BindingKind, CommandBinding, Configuration, ContentStore, Graphic, Sequence, TargetSpec,
};
use crate::error::ServiceError;
use crate::history::{History, HistoryEvent, HistoryQuery, HistoryRecord};
use crate::import::{import_polyline_json, import_svg, GraphicFormat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerOptions {
    pub dwell_ms: u64,
    pub planner: PlannerOptions,
    /// Keep per-tick marker rows for trace export.
    pub record_trace: bool,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self { dwell_ms: DEFAULT_DWELL_MS, planner: PlannerOptions::default(), record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepDirection {
    Next,
    Prev,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub kind: String,
    pub status: PlanStatus,
    pub makespan_ticks: u32,
    /// Coils visited by each marker, waits removed.
    pub paths: BTreeMap<MarkerId, Vec<CoilId>>,
    /// Target coil of each marker placed by this command.
    pub assignments: BTreeMap<MarkerId, CoilId>,
    pub parked: Vec<MarkerId>,
    pub unplanned: Vec<MarkerId>,
    /// True once every tick has been applied.
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_step: Option<usize>,
}

/// A compiled plan being applied one tick at a time.
#[derive(Debug, Clone)]
pub struct Execution {
    pub summary: PlanSummary,
    plan: MotionPlan,
    next_tick: u32,
    ticks: u32,
}

impl Execution {
    pub fn is_done(&self) -> bool {
        self.next_tick >= self.ticks
    }

    pub fn progress(&self) -> (u32, u32) {
        (self.next_tick, self.ticks)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub contention: u64,
    pub ambiguous: u64,
    pub separation: u64,
    /// Frames with more than one HIGH row per module.
    pub row_exclusivity: u64,
}

impl EventCounts {
    pub fn violations(&self) -> u64 {
        self.contention + self.ambiguous + self.separation + self.row_exclusivity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerView {
    pub id: MarkerId,
    pub x_mm: f64,
    pub y_mm: f64,
    pub state: MarkerState,
    pub coil_id: Option<CoilId>,
}

impl From<&Marker> for MarkerView {
    fn from(m: &Marker) -> Self {
        Self { id: m.id, x_mm: m.position.x, y_mm: m.position.y, state: m.state, coil_id: m.held_at }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutingView {
    pub kind: String,
    pub tick: u32,
    pub ticks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutySummary {
    pub hottest_coil: Option<CoilId>,
    pub max_on_fraction: f64,
    pub max_continuous_on_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Increments with every applied pass; snapshots are totally ordered.
    pub seq: u64,
    pub clock_ms: u64,
    pub backend: String,
    pub markers: Vec<MarkerView>,
    pub energized: Vec<CoilId>,
    pub holds: Vec<CoilId>,
    pub overrides: Vec<CoilId>,
    pub executing: Option<ExecutingView>,
    pub queued: usize,
    pub duty: DutySummary,
    pub stats: SimStats,
    pub events: EventCounts,
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilAck {
    pub coil_id: CoilId,
    pub on: bool,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphicUpload {
    pub format: GraphicFormat,
    pub data: String,
}

pub struct Controller {
    grid: Arc<CoilGrid>,
    backend: Box<dyn Backend>,
    content: ContentStore,
    store_path: Option<PathBuf>,
    history: History,
    holds: BTreeSet<CoilId>,
    overrides: BTreeSet<CoilId>,
    energized: BTreeSet<CoilId>,
    options: ControllerOptions,
    executing: Option<ExecutingView>,
    seq: u64,
    counts: EventCounts,
    trace: Vec<TraceRow>,
}

impl Controller {
    pub fn new(grid: Arc<CoilGrid>, options: ControllerOptions) -> Self {
        let params = SimParams { dwell_ms: options.dwell_ms, ..SimParams::for_grid(&grid) };
        let backend = Box::new(SimBackend::new(SimState::with_params(grid.clone(), params)));
        Self::with_backend(grid, backend, options)
    }

    pub fn with_backend(grid: Arc<CoilGrid>, backend: Box<dyn Backend>, options: ControllerOptions) -> Self {
        Self {
            grid,
            backend,
            content: ContentStore::default(),
            store_path: None,
            history: History::default(),
            holds: BTreeSet::new(),
            overrides: BTreeSet::new(),
            energized: BTreeSet::new(),
            options,
            executing: None,
            seq: 0,
            counts: EventCounts::default(),
            trace: Vec::new(),
        }
    }

    /// Loads content from `path` (missing file = empty) and saves back to it
    /// after every content change.
    pub fn with_store(mut self, path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        self.content = ContentStore::load(&path)?;
        self.store_path = Some(path);
        Ok(self)
    }

    pub fn with_content(mut self, content: ContentStore) -> Self {
        self.content = content;
        self
    }

    pub fn grid(&self) -> &Arc<CoilGrid> {
        &self.grid
    }

    pub fn sim(&self) -> &SimState {
        self.backend.sim()
    }

    pub fn content(&self) -> &ContentStore {
        &self.content
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn options(&self) -> &ControllerOptions {
        &self.options
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn flush(&self) -> Result<(), ServiceError> {
        match &self.store_path {
            Some(path) => self.content.save(path),
            None => Ok(()),
        }
    }

    fn passes(&self) -> u32 {
        passes_per_tick(self.options.dwell_ms, self.sim().params().t_snap_ms)
    }

    pub fn snapshot(&self, queued: usize) -> Snapshot {
        let sim = self.sim();
        let mut duty = DutySummary { hottest_coil: None, max_on_fraction: 0.0, max_continuous_on_ms: 0 };
        for c in sim.active_coils() {
            let d = sim.coil_duty(c);
            if d.on_fraction > duty.max_on_fraction {
                duty.max_on_fraction = d.on_fraction;
                duty.hottest_coil = Some(c);
            }
            duty.max_continuous_on_ms = duty.max_continuous_on_ms.max(d.continuous_on_ms);
        }
        Snapshot {
            seq: self.seq,
            clock_ms: sim.clock_ms(),
            backend: self.backend.name().to_string(),
            markers: sim.markers().map(MarkerView::from).collect(),
            energized: self.energized.iter().copied().collect(),
            holds: self.holds.iter().copied().collect(),
            overrides: self.overrides.iter().copied().collect(),
            executing: self.executing.clone(),
            queued,
            duty,
            stats: sim.stats(),
            events: self.counts,
            history_len: self.history.len(),
        }
    }

    pub fn query_history(&self, q: &HistoryQuery) -> Vec<HistoryRecord> {
        self.history.query(q)
    }

    /// Energizes `coils` for `passes` scan passes and books the resulting
    /// simulator events.
    fn apply(&mut self, coils: &BTreeSet<CoilId>, passes: u32) -> Result<Vec<SimEvent>, ServiceError> {
        let dwell = self.options.dwell_ms;
        let events = if coils.is_empty() {
            let sim = self.backend.sim_mut();
            let mut events = sim.idle(dwell * passes as u64)?;
            let holding: Vec<MarkerId> = sim.markers().filter(|m| m.held_at.is_some()).map(|m| m.id).collect();
            for id in holding {
                events.extend(sim.release(id)?);
            }
            events
        } else {
            let sched = schedule_ids(&self.grid, coils, dwell).map_err(|e| ServiceError::Validation(e.to_string()))?;
            self.counts.row_exclusivity += sched.frames.iter().filter(|f| !f.pattern.is_row_exclusive()).count() as u64;
            self.backend.run(&sched.repeated(passes))?
        };
        self.energized = coils.clone();
        self.seq += 1;
        if self.options.record_trace {
            self.trace.extend(self.sim().trace_rows());
        }
        let clock = self.sim().clock_ms();
        for e in &events {
            match e {
                SimEvent::Contention { coil, winner, losers, .. } => {
                    self.counts.contention += 1;
                    for m in std::iter::once(winner).chain(losers) {
                        self.history.push(clock, *m, *coil, HistoryEvent::Contention);
                    }
                }
                SimEvent::Ambiguous { .. } => self.counts.ambiguous += 1,
                SimEvent::SeparationViolation { .. } => self.counts.separation += 1,
                SimEvent::Released { marker, coil, .. } => {
                    self.holds.remove(coil);
                    self.history.push(clock, *marker, *coil, HistoryEvent::Released);
                }
                SimEvent::Captured { .. } => {}
            }
        }
        Ok(events)
    }

    fn powered(&self) -> BTreeSet<CoilId> {
        self.holds.union(&self.overrides).copied().collect()
    }

    /// One scan pass of the hold and override coils.
    pub fn idle_pass(&mut self) -> Result<(), ServiceError> {
        let coils = self.powered();
        if coils.is_empty() && self.energized.is_empty() {
            return Ok(());
        }
        self.apply(&coils, 1)?;
        Ok(())
    }

    /// Keeps the hold coils on for one planner tick, long enough for any
    /// displaced marker to settle.
    pub fn settle(&mut self) -> Result<(), ServiceError> {
        let coils = self.powered();
        let passes = self.passes();
        self.apply(&coils, passes)?;
        Ok(())
    }

    pub fn set_coil(&mut self, id: u32, on: bool) -> Result<CoilAck, ServiceError> {
        let coil = TargetSpec::Id { coil_id: id }.resolve(&self.grid)?;
        let before = self.powered();
        if on {
            self.overrides.insert(coil);
        } else {
            self.overrides.remove(&coil);
            self.holds.remove(&coil);
        }
        let changed = before != self.powered();
        if changed {
            let coils = self.powered();
            self.apply(&coils, 1)?;
        }
        Ok(CoilAck { coil_id: coil, on, changed })
    }

    fn marker_coils(&self) -> BTreeMap<MarkerId, CoilId> {
        let sim = self.sim();
        sim.markers().map(|m| (m.id, sim.marker_coil(m.id).expect("listed marker"))).collect()
    }

    /// Places a marker and captures it on the nearest coil.
    pub fn place_marker(&mut self, at: &TargetSpec) -> Result<MarkerView, ServiceError> {
        let coil = at.resolve(&self.grid)?;
        let position = match *at {
            TargetSpec::Point { x_mm, y_mm } => Point::new(x_mm, y_mm),
            _ => self.grid.center_of(coil)?,
        };
        let min = self.sim().params().min_separation_mm;
        for (other, c) in self.marker_coils() {
            if c == coil || self.grid.are_adjacent(c, coil) {
                let distance = self.grid.center_of(c)?.distance(self.grid.center_of(coil)?);
                return Err(ServiceError::Separation { other, distance, min });
            }
        }
        let id = self.backend.sim_mut().place_marker(position)?;
        self.holds.insert(coil);
        self.settle()?;
        let m = self.sim().marker(id)?.clone();
        if m.held_at == Some(coil) {
            self.history.push(self.sim().clock_ms(), id, coil, HistoryEvent::Held);
        }
        Ok(MarkerView::from(&m))
    }

    /// Displaces a marker as a finger push would, then lets the holds act
    /// for one tick.
    pub fn perturb(&mut self, id: u32, dx_mm: f64, dy_mm: f64) -> Result<MarkerView, ServiceError> {
        if !dx_mm.is_finite() || !dy_mm.is_finite() {
            return Err(ServiceError::Validation("displacement must be finite".into()));
        }
        let id = MarkerId(id);
        let before = self.sim().marker(id)?.held_at;
        self.backend.sim_mut().perturb(id, dx_mm, dy_mm)?;
        if let Some(coil) = before {
            if self.sim().marker(id)?.held_at.is_none() {
                self.holds.remove(&coil);
                self.history.push(self.sim().clock_ms(), id, coil, HistoryEvent::Released);
            }
        }
        self.settle()?;
        Ok(MarkerView::from(self.sim().marker(id)?))
    }

    fn execution(&self, kind: &str, plan: MotionPlan, assignments: BTreeMap<MarkerId, CoilId>, parked: Vec<MarkerId>) -> Result<Execution, ServiceError> {
        let paths = plan.per_marker.iter().map(|(m, p)| (*m, p.iter().map(|(c, _)| *c).collect())).collect();
        let summary = PlanSummary {
            kind: kind.to_string(),
            status: plan.status,
            makespan_ticks: plan.makespan_ticks,
            paths,
            assignments,
            parked,
            unplanned: plan.unplanned.clone(),
            completed: false,
            sequence_step: None,
        };
        if !plan.is_complete() {
            return Err(ServiceError::PartialFailure(Box::new(summary)));
        }
        // a plan without motion still runs one hold tick to confirm arrival
        let ticks = if plan.per_marker.is_empty() { 0 } else { plan.makespan_ticks.max(1) };
        Ok(Execution { summary, plan, next_tick: 0, ticks })
    }

    fn plan_to(&self, kind: &str, goals: BTreeMap<MarkerId, CoilId>, parked: BTreeMap<MarkerId, CoilId>) -> Result<Execution, ServiceError> {
        let starts = self.marker_coils();
        let mut all = goals.clone();
        all.extend(parked.iter().map(|(m, c)| (*m, *c)));
        let plan = plan_multi(&self.grid, &starts, &all, self.options.planner)?;
        self.execution(kind, plan, goals, parked.into_keys().collect())
    }

    pub fn prepare_move(&mut self, id: u32, target: &TargetSpec) -> Result<Execution, ServiceError> {
        let id = MarkerId(id);
        self.sim().marker(id)?;
        let coil = target.resolve(&self.grid)?;
        let center = self.grid.center_of(coil)?;
        let min = self.sim().params().min_separation_mm;
        for (other, c) in self.marker_coils() {
            if other == id {
                continue;
            }
            let m = self.sim().marker(other)?;
            let distance = m.position.distance(center);
            if c == coil || self.grid.are_adjacent(c, coil) || distance < min - 1e-6 {
                return Err(ServiceError::Separation { other, distance, min });
            }
        }
        self.plan_to("move", BTreeMap::from([(id, coil)]), BTreeMap::new())
    }

    fn resolve_configuration(&self, name: &str) -> Result<Vec<CoilId>, ServiceError> {
        let config = self.content.configurations.get(name).ok_or_else(|| ServiceError::not_found("configuration", name))?;
        self.content.validate_configuration(&self.grid, config)
    }

    /// Greedy nearest assignment by hop distance: the globally closest
    /// (marker, target) pair is fixed first; ties go to the lower marker id,
    /// then the lower coil id. Remaining markers are parked.
    pub fn prepare_render(&mut self, name: &str) -> Result<Execution, ServiceError> {
        let targets = self.resolve_configuration(name)?;
        let starts = self.marker_coils();
        if targets.len() > starts.len() {
            return Err(ServiceError::Deficit { targets: targets.len(), markers: starts.len() });
        }
        let dist: Vec<Vec<u32>> = targets.iter().map(|t| hop_distances(&self.grid, *t)).collect();
        let mut pairs: Vec<(u32, MarkerId, CoilId, usize)> = Vec::new();
        for (ti, t) in targets.iter().enumerate() {
            for (m, s) in &starts {
                pairs.push((dist[ti][s.0 as usize], *m, *t, ti));
            }
        }
        pairs.sort();
        let mut goals = BTreeMap::new();
        let mut used = BTreeSet::new();
        for (d, m, t, ti) in pairs {
            if d == u32::MAX || goals.contains_key(&m) || used.contains(&ti) {
                continue;
            }
            goals.insert(m, t);
            used.insert(ti);
        }
        if used.len() < targets.len() {
            return Err(ServiceError::Unreachable(format!("configuration '{name}' has targets no marker can reach")));
        }
        let surplus: BTreeMap<MarkerId, CoilId> =
            starts.iter().filter(|(m, _)| !goals.contains_key(m)).map(|(m, c)| (*m, *c)).collect();
        let mut exclude: BTreeSet<CoilId> = BTreeSet::new();
        for t in &targets {
            exclude.insert(*t);
            exclude.extend(self.grid.neighbor_ids(*t)?.iter().copied());
        }
        let (parking, left) = assign_parking(&self.grid, &surplus, &exclude);
        if !left.is_empty() {
            let summary = PlanSummary {
                kind: "render".into(),
                status: PlanStatus::PartialFailure,
                makespan_ticks: 0,
                paths: BTreeMap::new(),
                assignments: goals,
                parked: Vec::new(),
                unplanned: left,
                completed: false,
                sequence_step: None,
            };
            return Err(ServiceError::PartialFailure(Box::new(summary)));
        }
        self.plan_to("render", goals, parking)
    }

    pub fn prepare_park(&mut self) -> Result<Execution, ServiceError> {
        let starts = self.marker_coils();
        let (parking, left) = assign_parking(&self.grid, &starts, &BTreeSet::new());
        if !left.is_empty() {
            let summary = PlanSummary {
                kind: "park".into(),
                status: PlanStatus::PartialFailure,
                makespan_ticks: 0,
                paths: BTreeMap::new(),
                assignments: BTreeMap::new(),
                parked: parking.keys().copied().collect(),
                unplanned: left,
                completed: false,
                sequence_step: None,
            };
            return Err(ServiceError::PartialFailure(Box::new(summary)));
        }
        self.plan_to("park", BTreeMap::new(), parking)
    }

    pub fn prepare_trigger(&mut self, text: &str) -> Result<Execution, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::Validation("trigger text must not be empty".into()));
        }
        let Some(binding) = self.content.bindings.get(text).cloned() else {
            return Err(ServiceError::NotFound {
                kind: "binding",
                name: text.to_string(),
                suggestions: self.content.suggest_triggers(text),
            });
        };
        match binding.kind {
            BindingKind::Render => self.prepare_render(&binding.configuration),
            BindingKind::Sequence => self.prepare_sequence_step(&binding.configuration, StepDirection::Next),
        }
    }

    pub fn prepare_sequence_step(&mut self, name: &str, dir: StepDirection) -> Result<Execution, ServiceError> {
        let seq = self.content.sequences.get(name).cloned().ok_or_else(|| ServiceError::not_found("sequence", name))?;
        let last = seq.steps.len() - 1;
        let (step, started) = match dir {
            StepDirection::Next if !seq.started => (seq.current_step, true),
            StepDirection::Next => ((seq.current_step + 1).min(last), true),
            StepDirection::Prev => (seq.current_step.saturating_sub(1), true),
            StepDirection::Reset => (0, false),
        };
        let mut exec = if started {
            self.prepare_render(&seq.steps[step])?
        } else {
            self.execution("sequence", MotionPlan::empty(), BTreeMap::new(), Vec::new())?
        };
        exec.summary.kind = "sequence".into();
        exec.summary.sequence_step = Some(step);
        let entry = self.content.sequences.get_mut(name).expect("checked above");
        entry.current_step = step;
        entry.started = started;
        self.flush()?;
        Ok(exec)
    }

    /// Applies the next tick of `exec`. Each tick powers every marker's
    /// coil for the following tick (next hop or hold) plus the overrides.
    pub fn step_execution(&mut self, exec: &mut Execution) -> Result<bool, ServiceError> {
        if exec.is_done() {
            return Ok(true);
        }
        let t = exec.next_tick;
        self.executing = Some(ExecutingView { kind: exec.summary.kind.clone(), tick: t, ticks: exec.ticks });
        let mut coils: BTreeSet<CoilId> =
            exec.plan.per_marker.keys().filter_map(|m| exec.plan.position_at(*m, t + 1)).collect();
        coils.extend(self.overrides.iter().copied());
        // markers placed after planning keep their holds
        let unplanned: Vec<CoilId> = self
            .sim()
            .markers()
            .filter(|m| !exec.plan.per_marker.contains_key(&m.id))
            .filter_map(|m| m.held_at)
            .collect();
        coils.extend(unplanned.iter().copied());
        let passes = self.passes();
        self.holds = exec.plan.per_marker.keys().filter_map(|m| exec.plan.position_at(*m, t + 1)).collect();
        self.holds.extend(unplanned);
        self.apply(&coils, passes)?;
        exec.next_tick += 1;
        if exec.is_done() {
            self.finish_execution(exec)?;
        }
        Ok(exec.is_done())
    }

    pub fn abort_execution(&mut self) {
        self.executing = None;
    }

    fn finish_execution(&mut self, exec: &mut Execution) -> Result<(), ServiceError> {
        self.executing = None;
        let clock = self.sim().clock_ms();
        for (m, coil) in &exec.summary.assignments {
            if self.sim().marker(*m)?.held_at == Some(*coil) {
                self.history.push(clock, *m, *coil, HistoryEvent::Arrived);
            }
        }
        for m in &exec.summary.parked {
            let held = self.sim().marker(*m)?.held_at;
            if let Some(coil) = held {
                self.backend.sim_mut().set_parked(*m)?;
                self.history.push(clock, *m, coil, HistoryEvent::Parked);
            }
        }
        exec.summary.completed = true;
        Ok(())
    }

    /// Runs `exec` to completion.
    pub fn execute(&mut self, mut exec: Execution) -> Result<PlanSummary, ServiceError> {
        while !self.step_execution(&mut exec)? {}
        if exec.ticks == 0 {
            self.finish_execution(&mut exec)?;
        }
        Ok(exec.summary)
    }

    pub fn move_marker(&mut self, id: u32, target: &TargetSpec) -> Result<PlanSummary, ServiceError> {
        let exec = self.prepare_move(id, target)?;
        self.execute(exec)
    }

    pub fn render(&mut self, name: &str) -> Result<PlanSummary, ServiceError> {
        let exec = self.prepare_render(name)?;
        self.execute(exec)
    }

    pub fn park(&mut self) -> Result<PlanSummary, ServiceError> {
        let exec = self.prepare_park()?;
        self.execute(exec)
    }

    pub fn trigger(&mut self, text: &str) -> Result<PlanSummary, ServiceError> {
        let exec = self.prepare_trigger(text)?;
        self.execute(exec)
    }

    pub fn sequence_step(&mut self, name: &str, dir: StepDirection) -> Result<PlanSummary, ServiceError> {
        let exec = self.prepare_sequence_step(name, dir)?;
        self.execute(exec)
    }

    // content management

    fn saved<T>(&mut self, value: T) -> Result<T, ServiceError> {
        self.flush()?;
        Ok(value)
    }

    pub fn put_configuration(&mut self, config: Configuration) -> Result<Configuration, ServiceError> {
        self.content.put_configuration(&self.grid, config.clone())?;
        self.saved(config)
    }

    pub fn delete_configuration(&mut self, name: &str) -> Result<Configuration, ServiceError> {
        let c = self.content.delete_configuration(name)?;
        self.saved(c)
    }

    pub fn put_binding(&mut self, binding: CommandBinding) -> Result<CommandBinding, ServiceError> {
        self.content.put_binding(binding.clone())?;
        self.saved(binding)
    }

    pub fn delete_binding(&mut self, trigger: &str) -> Result<CommandBinding, ServiceError> {
        let b = self.content.delete_binding(trigger)?;
        self.saved(b)
    }

    pub fn put_sequence(&mut self, seq: Sequence) -> Result<Sequence, ServiceError> {
        self.content.put_sequence(seq.clone())?;
        self.saved(seq)
    }

    pub fn delete_sequence(&mut self, name: &str) -> Result<Sequence, ServiceError> {
        let s = self.content.delete_sequence(name)?;
        self.saved(s)
    }

    pub fn import_graphic(&mut self, name: &str, upload: &GraphicUpload) -> Result<Graphic, ServiceError> {
        check_name("graphic", name)?;
        let elements = match upload.format {
            GraphicFormat::Svg => import_svg(&upload.data)?,
            GraphicFormat::Polyline => import_polyline_json(&upload.data)?,
        };
        let graphic = Graphic { name: name.to_string(), elements };
        self.content.put_graphic(&self.grid, graphic.clone())?;
        self.saved(graphic)
    }

    pub fn delete_graphic(&mut self, name: &str) -> Result<Graphic, ServiceError> {
        let g = self.content.delete_graphic(name)?;
        self.saved(g)
    }

    /// Replaces all content at once, validating every item.
    pub fn load_content(&mut self, content: ContentStore) -> Result<(), ServiceError> {
        let mut fresh = ContentStore::default();
        for g in content.graphics.into_values() {
            fresh.put_graphic(&self.grid, g)?;
        }
        for c in content.configurations.into_values() {
            fresh.put_configuration(&self.grid, c)?;
        }
        for s in content.sequences.into_values() {
            fresh.put_sequence(s)?;
        }
        for b in content.bindings.into_values() {
            fresh.put_binding(b)?;
        }
        self.content = fresh;
        self.flush()
    }
}
