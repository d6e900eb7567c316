//! Shortest zig-zag paths, prioritized multi-marker planning and compilation
//! of plans into frame schedules.
//!
//! Planner time is measured in ticks; one tick moves a marker by one hop. Two
//! markers conflict at tick `t` when any coil either of them occupies at `t`
//! or `t + 1` equals or neighbors a coil the other occupies at `t` or `t + 1`.
//! Keeping every marker outside the other markers' closed neighborhoods keeps
//! them at least one pitch apart during motion, and no energized coil ever
//! reaches a second marker.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{schedule_ids, DriveError, FrameSchedule};
use crate::grid::{CoilAddress, CoilGrid, CoilId, GridError, Layer};
use crate::sim::{MarkerId, SimState};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Drive(#[from] DriveError),
    #[error("coil {goal} is unreachable from {start}")]
    Unreachable { start: CoilId, goal: CoilId },
    #[error("markers {0} and {1} share goal coil {2}")]
    DuplicateGoal(MarkerId, MarkerId, CoilId),
    #[error("markers {0} and {1} start on the same coil {2}")]
    DuplicateStart(MarkerId, MarkerId, CoilId),
    #[error("goals of markers {0} and {1} are too close to hold both")]
    GoalsTooClose(MarkerId, MarkerId),
    #[error("marker {0} has a goal but no start")]
    MissingStart(MarkerId),
    #[error("plan is incomplete; unplanned markers: {0:?}")]
    Incomplete(Vec<MarkerId>),
    #[error("plan for marker {0} is malformed: {1}")]
    Malformed(MarkerId, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanStatus {
    Complete,
    PartialFailure,
}

/// Per-marker coil sequence with arrival ticks. A marker waits on a coil
/// until the tick of the next entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub per_marker: BTreeMap<MarkerId, Vec<(CoilId, u32)>>,
    pub makespan_ticks: u32,
    pub status: PlanStatus,
    #[serde(default)]
    pub unplanned: Vec<MarkerId>,
}

impl MotionPlan {
    pub fn empty() -> Self {
        Self { per_marker: BTreeMap::new(), makespan_ticks: 0, status: PlanStatus::Complete, unplanned: Vec::new() }
    }

    pub fn is_complete(&self) -> bool {
        self.status == PlanStatus::Complete
    }

    pub fn position_at(&self, marker: MarkerId, tick: u32) -> Option<CoilId> {
        let path = self.per_marker.get(&marker)?;
        path.iter().take_while(|(_, t)| *t <= tick).last().map(|(c, _)| *c)
    }

    pub fn start(&self, marker: MarkerId) -> Option<CoilId> {
        self.per_marker.get(&marker)?.first().map(|(c, _)| *c)
    }

    pub fn goal(&self, marker: MarkerId) -> Option<CoilId> {
        self.per_marker.get(&marker)?.last().map(|(c, _)| *c)
    }

    /// Markers whose goal differs from their start.
    pub fn moving_markers(&self) -> impl Iterator<Item = MarkerId> + '_ {
        self.per_marker.iter().filter(|(_, p)| p.len() > 1).map(|(m, _)| *m)
    }

    /// Number of hops across all markers.
    pub fn total_hops(&self) -> usize {
        self.per_marker.values().map(|p| p.len().saturating_sub(1)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Checks the structural and separation invariants against `grid`.
    pub fn validate(&self, grid: &CoilGrid) -> Result<(), PlanError> {
        for (m, path) in &self.per_marker {
            let Some(&(_, t0)) = path.first() else {
                return Err(PlanError::Malformed(*m, "empty path".into()));
            };
            if t0 != 0 {
                return Err(PlanError::Malformed(*m, "path must start at tick 0".into()));
            }
            for &(c, _) in path {
                if !grid.contains_id(c) {
                    return Err(GridError::UnknownCoil(c.0).into());
                }
            }
            for w in path.windows(2) {
                let ((a, ta), (b, tb)) = (w[0], w[1]);
                if tb <= ta {
                    return Err(PlanError::Malformed(*m, format!("ticks not increasing at {tb}")));
                }
                if !grid.are_adjacent(a, b) {
                    return Err(PlanError::Malformed(*m, format!("{a} -> {b} is not a hop")));
                }
            }
            let last = path.last().unwrap().1;
            if last > self.makespan_ticks {
                return Err(PlanError::Malformed(*m, "arrives after makespan".into()));
            }
        }
        let markers: Vec<MarkerId> = self.per_marker.keys().copied().collect();
        for t in 0..=self.makespan_ticks {
            let window = |m: MarkerId| {
                let a = self.position_at(m, t).unwrap();
                let b = self.position_at(m, t + 1).unwrap();
                [a, b]
            };
            for (i, &a) in markers.iter().enumerate() {
                for &b in &markers[i + 1..] {
                    for x in window(a) {
                        for y in window(b) {
                            if x == y || grid.are_adjacent(x, y) {
                                return Err(PlanError::Malformed(a, format!("conflicts with marker {b} at tick {t}")));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Priority orders to try before giving up; `None` means `min(k!, 24)`.
    pub max_permutations: Option<usize>,
    /// Allow at most one marker to move per tick.
    pub sequential: bool,
}

fn closed_neighborhood(grid: &CoilGrid, c: CoilId) -> impl Iterator<Item = CoilId> + '_ {
    std::iter::once(c).chain(grid.adj(c).iter().copied())
}

/// Hop distances from `goal` to every coil (`u32::MAX` when unreachable).
pub fn hop_distances(grid: &CoilGrid, goal: CoilId) -> Vec<u32> {
    let mut dist = vec![u32::MAX; grid.coil_count() as usize];
    let mut queue = VecDeque::new();
    dist[goal.0 as usize] = 0;
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = dist[c.0 as usize];
        for &n in grid.adj(c) {
            if dist[n.0 as usize] == u32::MAX {
                dist[n.0 as usize] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Minimal-hop path from `start` to `goal`, both included. Among equal
/// paths the one found by expanding neighbors in packed-ID order wins.
pub fn shortest_path(grid: &CoilGrid, start: CoilId, goal: CoilId) -> Result<Vec<CoilId>, PlanError> {
    grid.addr_of(start)?;
    grid.addr_of(goal)?;
    let mut parent: HashMap<CoilId, CoilId> = HashMap::new();
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        if c == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(&p) = parent.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for &n in grid.adj(c) {
            if seen.insert(n) {
                parent.insert(n, c);
                queue.push_back(n);
            }
        }
    }
    Err(PlanError::Unreachable { start, goal })
}

pub fn plan_path(grid: &CoilGrid, start: CoilAddress, goal: CoilAddress) -> Result<Vec<CoilAddress>, PlanError> {
    let path = shortest_path(grid, grid.coil_id(start)?, grid.coil_id(goal)?)?;
    Ok(path.into_iter().map(|c| grid.addr_of(c).expect("path stays on grid")).collect())
}

/// Space-time blocks left by already planned markers.
struct Reservations {
    by_tick: Vec<HashSet<CoilId>>,
    /// Coil -> first tick from which it stays blocked forever.
    permanent: HashMap<CoilId, u32>,
    /// Coil -> last tick it appears in `by_tick`.
    last_temporary: HashMap<CoilId, u32>,
    moving_ticks: HashSet<u32>,
}

impl Reservations {
    fn new() -> Self {
        Self { by_tick: Vec::new(), permanent: HashMap::new(), last_temporary: HashMap::new(), moving_ticks: HashSet::new() }
    }

    fn blocked(&self, c: CoilId, t: u32) -> bool {
        self.by_tick.get(t as usize).is_some_and(|s| s.contains(&c)) || self.permanent.get(&c).is_some_and(|&from| from <= t)
    }

    /// True when `c` stays free at every tick from `t` on.
    fn free_from(&self, c: CoilId, t: u32) -> bool {
        !self.permanent.contains_key(&c) && self.last_temporary.get(&c).is_none_or(|&last| last < t)
    }

    fn horizon(&self) -> u32 {
        let perm = self.permanent.values().copied().max().unwrap_or(0);
        (self.by_tick.len() as u32).max(perm)
    }

    fn reserve(&mut self, grid: &CoilGrid, path: &[CoilId]) {
        let arrive = path.len() as u32 - 1;
        for (t, &c) in path.iter().enumerate().take(arrive as usize) {
            if self.by_tick.len() <= t {
                self.by_tick.resize_with(t + 1, HashSet::new);
            }
            for n in closed_neighborhood(grid, c) {
                self.by_tick[t].insert(n);
                let last = self.last_temporary.entry(n).or_insert(0);
                *last = (*last).max(t as u32);
            }
            if path[t + 1] != c {
                self.moving_ticks.insert(t as u32);
            }
        }
        let goal = *path.last().unwrap();
        for n in closed_neighborhood(grid, goal) {
            let from = self.permanent.entry(n).or_insert(arrive);
            *from = (*from).min(arrive);
        }
    }
}

/// Extra cost per tick spent where a not yet planned marker is still
/// waiting; steers early priorities around later markers' start cells.
const SOFT_PENALTY: u32 = 3;

/// Second variant tried for every priority order: later markers' start
/// cells are off limits for this many ticks, giving them time to step aside.
const YIELD_TICKS: u32 = 6;

/// Start neighborhoods of markers that are planned later.
struct Pending {
    cells: HashSet<CoilId>,
    hard_until: u32,
}

impl Pending {
    fn blocked(&self, c: CoilId, t: u32) -> bool {
        t < self.hard_until && self.cells.contains(&c)
    }
}

/// Cheapest path in the time-expanded graph avoiding `res`, where every tick
/// costs one plus [`SOFT_PENALTY`] when spent on a pending coil. Returns
/// the coil at every tick from 0 to arrival.
fn space_time_search(
    grid: &CoilGrid,
    start: CoilId,
    goal: CoilId,
    res: &Reservations,
    pending: &Pending,
    sequential: bool,
) -> Option<Vec<CoilId>> {
    if res.blocked(start, 0) {
        return None;
    }
    let h = hop_distances(grid, goal);
    if h[start.0 as usize] == u32::MAX || res.permanent.contains_key(&goal) {
        return None;
    }
    let horizon = res.horizon() + 2 * grid.coil_count() + 2;
    let mut open = BinaryHeap::new();
    // (coil, tick) -> (cost so far, predecessor)
    type Node = (CoilId, u32);
    let mut best: HashMap<Node, (u32, Option<Node>)> = HashMap::new();
    let mut closed: HashSet<(CoilId, u32)> = HashSet::new();
    best.insert((start, 0), (0, None));
    open.push(Reverse((h[start.0 as usize], h[start.0 as usize], start, 0u32)));
    while let Some(Reverse((_, _, c, t))) = open.pop() {
        if !closed.insert((c, t)) {
            continue;
        }
        if c == goal && res.free_from(goal, t) {
            let mut path = vec![c];
            let mut cur = (c, t);
            while let Some(&(_, Some(p))) = best.get(&cur) {
                path.push(p.0);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        if t >= horizon {
            continue;
        }
        let g = best[&(c, t)].0;
        let nt = t + 1;
        let can_move = !(sequential && res.moving_ticks.contains(&t));
        let moves = std::iter::once(c).chain(grid.adj(c).iter().copied().filter(|_| can_move));
        for n in moves {
            let hard = |x: CoilId, at: u32| res.blocked(x, at) || pending.blocked(x, at);
            if hard(c, nt) || hard(n, t) || hard(n, nt) || closed.contains(&(n, nt)) {
                continue;
            }
            let hn = h[n.0 as usize];
            if hn == u32::MAX {
                continue;
            }
            let gn = g + 1 + if pending.cells.contains(&n) { SOFT_PENALTY } else { 0 };
            if best.get(&(n, nt)).is_some_and(|(old, _)| *old <= gn) {
                continue;
            }
            best.insert((n, nt), (gn, Some((c, t))));
            open.push(Reverse((gn + hn, hn, n, nt)));
        }
    }
    None
}

fn compress(path: &[CoilId]) -> Vec<(CoilId, u32)> {
    let mut out: Vec<(CoilId, u32)> = Vec::new();
    for (t, &c) in path.iter().enumerate() {
        if out.last().is_none_or(|(last, _)| *last != c) {
            out.push((c, t as u32));
        }
    }
    out
}

fn factorial_capped(k: usize, cap: usize) -> usize {
    let mut f = 1usize;
    for i in 2..=k {
        f = f.saturating_mul(i);
        if f >= cap {
            return cap;
        }
    }
    f.min(cap)
}

fn check_goal_set(
    grid: &CoilGrid,
    starts: &BTreeMap<MarkerId, CoilId>,
    goals: &BTreeMap<MarkerId, CoilId>,
) -> Result<BTreeMap<MarkerId, CoilId>, PlanError> {
    for &c in starts.values().chain(goals.values()) {
        grid.addr_of(c)?;
    }
    for m in goals.keys() {
        if !starts.contains_key(m) {
            return Err(PlanError::MissingStart(*m));
        }
    }
    let mut seen: HashMap<CoilId, MarkerId> = HashMap::new();
    for (m, c) in starts {
        if let Some(other) = seen.insert(*c, *m) {
            return Err(PlanError::DuplicateStart(other, *m, *c));
        }
    }
    let full: BTreeMap<MarkerId, CoilId> =
        starts.iter().map(|(m, s)| (*m, goals.get(m).copied().unwrap_or(*s))).collect();
    let mut seen: HashMap<CoilId, MarkerId> = HashMap::new();
    for (m, c) in &full {
        if let Some(other) = seen.insert(*c, *m) {
            return Err(PlanError::DuplicateGoal(other, *m, *c));
        }
    }
    let list: Vec<(MarkerId, CoilId)> = full.iter().map(|(m, c)| (*m, *c)).collect();
    for (i, (a, ca)) in list.iter().enumerate() {
        for (b, cb) in &list[i + 1..] {
            if grid.are_adjacent(*ca, *cb) {
                return Err(PlanError::GoalsTooClose(*a, *b));
            }
        }
    }
    Ok(full)
}

/// Routes every marker in `starts` to its goal (markers without a goal stay
/// put) with prioritized planning over a time-expanded reservation table.
pub fn plan_multi(
    grid: &CoilGrid,
    starts: &BTreeMap<MarkerId, CoilId>,
    goals: &BTreeMap<MarkerId, CoilId>,
    options: PlannerOptions,
) -> Result<MotionPlan, PlanError> {
    let full_goals = check_goal_set(grid, starts, goals)?;
    if starts.len() == 1 {
        let (&m, &s) = starts.iter().next().unwrap();
        let path = shortest_path(grid, s, full_goals[&m])?;
        let makespan = path.len() as u32 - 1;
        return Ok(MotionPlan {
            per_marker: BTreeMap::from([(m, compress(&path))]),
            makespan_ticks: makespan,
            status: PlanStatus::Complete,
            unplanned: Vec::new(),
        });
    }
    for (m, s) in starts {
        hop_distances(grid, full_goals[m])
            .get(s.0 as usize)
            .filter(|d| **d != u32::MAX)
            .ok_or(PlanError::Unreachable { start: *s, goal: full_goals[m] })?;
    }

    let mut order: Vec<MarkerId> = starts.keys().copied().collect();
    // markers that stay put are fixed obstacles; plan them first
    order.sort_by_key(|m| (starts[m] != full_goals[m], *m));
    let attempts = options.max_permutations.unwrap_or_else(|| factorial_capped(order.len(), 24)).max(1);

    let mut tried: HashSet<Vec<MarkerId>> = HashSet::new();
    // paths and unplanned markers of the order that left the fewest behind
    type Attempt = (BTreeMap<MarkerId, Vec<CoilId>>, Vec<MarkerId>);
    let mut best: Option<Attempt> = None;
    let mut rng_state: u64 = 0x9e37_79b9_7f4a_7c15;
    for _ in 0..attempts {
        tried.insert(order.clone());
        let mut failed: Vec<MarkerId> = Vec::new();
        for hard_until in [0, YIELD_TICKS] {
            let (planned, f) = plan_in_order(grid, starts, &full_goals, &order, hard_until, options.sequential);
            if f.is_empty() {
                return Ok(finish(planned, PlanStatus::Complete, Vec::new()));
            }
            if best.as_ref().is_none_or(|(p, _)| planned.len() > p.len()) {
                best = Some((planned, f.clone()));
            }
            if failed.is_empty() {
                failed = f;
            }
        }
        // retry with the first failure promoted to top priority
        let mut next = order.clone();
        next.retain(|m| *m != failed[0]);
        next.insert(0, failed[0]);
        let mut guard = 0;
        while tried.contains(&next) && guard < 64 {
            for i in (1..next.len()).rev() {
                rng_state ^= rng_state << 13;
                rng_state ^= rng_state >> 7;
                rng_state ^= rng_state << 17;
                next.swap(i, (rng_state % (i as u64 + 1)) as usize);
            }
            guard += 1;
        }
        order = next;
    }
    let (planned, failed) = best.expect("at least one attempt");
    Ok(finish(planned, PlanStatus::PartialFailure, failed))
}

fn plan_in_order(
    grid: &CoilGrid,
    starts: &BTreeMap<MarkerId, CoilId>,
    goals: &BTreeMap<MarkerId, CoilId>,
    order: &[MarkerId],
    hard_until: u32,
    sequential: bool,
) -> (BTreeMap<MarkerId, Vec<CoilId>>, Vec<MarkerId>) {
    let mut res = Reservations::new();
    let mut planned = BTreeMap::new();
    let mut failed = Vec::new();
    for (i, &m) in order.iter().enumerate() {
        let cells = order[i + 1..].iter().flat_map(|later| closed_neighborhood(grid, starts[later])).collect();
        let pending = Pending { cells, hard_until };
        match space_time_search(grid, starts[&m], goals[&m], &res, &pending, sequential) {
            Some(path) => {
                res.reserve(grid, &path);
                planned.insert(m, path);
            }
            None => failed.push(m),
        }
    }
    (planned, failed)
}

fn finish(planned: BTreeMap<MarkerId, Vec<CoilId>>, status: PlanStatus, mut unplanned: Vec<MarkerId>) -> MotionPlan {
    let per_marker: BTreeMap<MarkerId, Vec<(CoilId, u32)>> =
        planned.iter().map(|(m, p)| (*m, compress(p))).collect();
    let makespan_ticks = per_marker.values().filter_map(|p| p.last()).map(|(_, t)| *t).max().unwrap_or(0);
    unplanned.sort();
    MotionPlan { per_marker, makespan_ticks, status, unplanned }
}

/// Number of scan passes per tick so that every tick coil accumulates at
/// least `t_snap_ms` of on-time.
pub fn passes_per_tick(dwell_ms: u64, t_snap_ms: u64) -> u32 {
    t_snap_ms.div_ceil(dwell_ms.max(1)).max(1) as u32
}

/// One schedule per tick. Tick `t` energizes, for every marker, the coil it
/// occupies at `t + 1`: the next hop for moving markers and the hold coil for
/// the rest. A plan with no motion compiles to a single hold schedule.
pub fn compile_plan(grid: &CoilGrid, plan: &MotionPlan, dwell_ms: u64, t_snap_ms: u64) -> Result<Vec<FrameSchedule>, PlanError> {
    if !plan.is_complete() {
        return Err(PlanError::Incomplete(plan.unplanned.clone()));
    }
    for path in plan.per_marker.values() {
        for (c, _) in path {
            grid.addr_of(*c)?;
        }
    }
    if plan.per_marker.is_empty() {
        return Ok(Vec::new());
    }
    let passes = passes_per_tick(dwell_ms, t_snap_ms);
    let ticks = plan.makespan_ticks.max(1);
    let mut out = Vec::with_capacity(ticks as usize);
    for t in 0..ticks {
        let coils: BTreeSet<CoilId> =
            plan.per_marker.keys().map(|m| plan.position_at(*m, t + 1).expect("planned marker")).collect();
        let mut sched = schedule_ids(grid, &coils, dwell_ms)?.repeated(passes);
        sched.cycle = false;
        out.push(sched);
    }
    Ok(out)
}

/// Corner used for parking.
pub fn park_corner(grid: &CoilGrid) -> crate::grid::Point {
    grid.bounds().0
}

/// Parking cells along the bottom and left edges of the board: every other
/// TOP coil, ordered outward from the lower-left corner. Spacing them two
/// coils apart leaves a free corridor one row or column inside the edge.
pub fn park_slots(grid: &CoilGrid) -> Vec<CoilId> {
    let tops: Vec<(CoilId, i64, i64)> = grid
        .coil_ids()
        .filter(|&c| grid.addr_of(c).map(|a| a.layer == Layer::Top).unwrap_or(false))
        .map(|c| {
            let (hx, hy) = grid.half_lattice(c).expect("coil on lattice");
            (c, (hx - 1) / 2, (hy - 1) / 2)
        })
        .collect();
    let gx0 = tops.iter().map(|t| t.1).min().unwrap_or(0);
    let gy0 = tops.iter().map(|t| t.2).min().unwrap_or(0);
    let corner = park_corner(grid);
    let mut slots: Vec<(f64, CoilId)> = tops
        .into_iter()
        .filter(|&(_, gx, gy)| (gy == gy0 && (gx - gx0) % 2 == 0) || (gx == gx0 && (gy - gy0) % 2 == 0))
        .map(|(c, _, _)| (grid.center_of(c).unwrap().distance(corner), c))
        .collect();
    slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    slots.into_iter().map(|(_, c)| c).collect()
}

/// Greedy parking assignment. Markers already on a usable slot keep it; each
/// remaining slot, nearest the corner first, takes the closest unassigned
/// marker. Slots in `exclude` are skipped. Returns the assignment and the
/// markers left without a slot.
pub fn assign_parking(
    grid: &CoilGrid,
    markers: &BTreeMap<MarkerId, CoilId>,
    exclude: &BTreeSet<CoilId>,
) -> (BTreeMap<MarkerId, CoilId>, Vec<MarkerId>) {
    let slots: Vec<CoilId> = park_slots(grid).into_iter().filter(|s| !exclude.contains(s)).collect();
    let mut assigned: BTreeMap<MarkerId, CoilId> = BTreeMap::new();
    let mut taken: HashSet<CoilId> = HashSet::new();
    for (m, c) in markers {
        if slots.contains(c) {
            assigned.insert(*m, *c);
            taken.insert(*c);
        }
    }
    for slot in slots {
        if taken.contains(&slot) {
            continue;
        }
        let center = grid.center_of(slot).unwrap();
        let pick = markers
            .iter()
            .filter(|(m, _)| !assigned.contains_key(*m))
            .map(|(m, c)| (grid.center_of(*c).unwrap().distance(center), *m))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match pick {
            Some((_, m)) => {
                assigned.insert(m, slot);
                taken.insert(slot);
            }
            None => break,
        }
    }
    let left: Vec<MarkerId> = markers.keys().filter(|m| !assigned.contains_key(*m)).copied().collect();
    (assigned, left)
}

/// Plans every marker in `state` into the parking region.
pub fn park_all(grid: &CoilGrid, state: &SimState, options: PlannerOptions) -> Result<MotionPlan, PlanError> {
    let starts: BTreeMap<MarkerId, CoilId> =
        state.markers().map(|m| Ok((m.id, state.marker_coil(m.id).map_err(|_| PlanError::MissingStart(m.id))?))).collect::<Result<_, PlanError>>()?;
    park_markers(grid, &starts, options)
}

pub fn park_markers(grid: &CoilGrid, starts: &BTreeMap<MarkerId, CoilId>, options: PlannerOptions) -> Result<MotionPlan, PlanError> {
    if starts.is_empty() {
        return Ok(MotionPlan::empty());
    }
    let (assigned, left) = assign_parking(grid, starts, &BTreeSet::new());
    if left.is_empty() {
        return plan_multi(grid, starts, &assigned, options);
    }
    // markers without a slot stay where they are; slots next to them are unusable
    let stuck: BTreeSet<CoilId> = left.iter().flat_map(|m| closed_neighborhood(grid, starts[m])).collect();
    let movers: BTreeMap<MarkerId, CoilId> = starts.iter().filter(|(m, _)| !left.contains(m)).map(|(m, c)| (*m, *c)).collect();
    let (assigned, _) = assign_parking(grid, &movers, &stuck);
    let goals: BTreeMap<MarkerId, CoilId> = assigned.into_iter().filter(|(m, _)| movers.contains_key(m)).collect();
    let mut plan = match plan_multi(grid, starts, &goals, options) {
        Ok(p) => p,
        Err(PlanError::GoalsTooClose(..)) | Err(PlanError::DuplicateGoal(..)) => {
            finish(BTreeMap::new(), PlanStatus::PartialFailure, starts.keys().copied().collect())
        }
        Err(e) => return Err(e),
    };
    plan.status = PlanStatus::PartialFailure;
    plan.unplanned.extend(left);
    plan.unplanned.sort();
    plan.unplanned.dedup();
    Ok(plan)
}
