//! Two-layer coil lattice: geometry, packed coil IDs, inter-layer adjacency
//! and tiling of several modules into one board.
//!
//! Coordinates are millimetres with the origin at the lower-left corner of the
//! board, x to the right and y upward. TOP coil `(r, c)` of a module sits at
//! `origin + (c·p + p/2, r·p + p/2)`; the BOTTOM coil with the same indices is
//! shifted by `(p/2, p/2)`. A magnet can only hop between opposite-layer coils
//! whose centres differ by exactly half a pitch on both axes.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    TooSmall { rows: u32, cols: u32 },
    #[error("board size must be positive, got {0} mm")]
    BadBoardSize(f64),
    #[error("invalid hardware profile: {0}")]
    BadProfile(String),
    #[error("unknown module {0}")]
    UnknownModule(ModuleId),
    #[error("duplicate module id {0}")]
    DuplicateModule(ModuleId),
    #[error("coil ({row}, {col}) out of range for module {module}")]
    OutOfRange { module: ModuleId, row: u32, col: u32 },
    #[error("unknown coil id {0}")]
    UnknownCoil(u32),
    #[error("modules {0} and {1} overlap")]
    Overlap(ModuleId, ModuleId),
    #[error("module {module} has pitch {found} mm, expected {expected} mm")]
    PitchMismatch { module: ModuleId, expected: f64, found: f64 },
    #[error("module {0} origin is not on the coil lattice")]
    Misaligned(ModuleId),
    #[error("grid has no modules")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Layer {
    Top,
    Bottom,
}

impl Layer {
    pub fn opposite(self) -> Layer {
        match self {
            Layer::Top => Layer::Bottom,
            Layer::Bottom => Layer::Top,
        }
    }

    fn index(self) -> u32 {
        match self {
            Layer::Top => 0,
            Layer::Bottom => 1,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Top => "TOP",
            Layer::Bottom => "BOTTOM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleId(pub u32);

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Packed coil identifier, dense over the whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoilId(pub u32);

impl fmt::Display for CoilId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoilAddress {
    pub module: ModuleId,
    pub layer: Layer,
    pub row: u32,
    pub col: u32,
}

impl CoilAddress {
    pub fn new(module: u32, layer: Layer, row: u32, col: u32) -> Self {
        Self { module: ModuleId(module), layer, row, col }
    }

    pub fn top(row: u32, col: u32) -> Self {
        Self::new(0, Layer::Top, row, col)
    }

    pub fn bottom(row: u32, col: u32) -> Self {
        Self::new(0, Layer::Bottom, row, col)
    }
}

impl fmt::Display for CoilAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}:{}({},{})", self.module, self.layer, self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }
}

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

/// Physical parameters of the coil board and markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub coil_turns: u32,
    pub coil_size_mm: f64,
    pub trace_width_mm: f64,
    pub coil_current_amps: Span,
    pub supply_volts: f64,
    pub scan_period_ms: Span,
    pub magnet_diameter_mm: f64,
    pub magnet_thickness_mm: f64,
    pub magnet_grade: String,
    pub marker_unit_cost_usd: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        Self {
            coil_turns: 22,
            coil_size_mm: 15.85,
            trace_width_mm: 0.1524,
            coil_current_amps: Span::new(0.5, 1.0),
            supply_volts: 9.0,
            scan_period_ms: Span::new(10.0, 100.0),
            magnet_diameter_mm: 2.0,
            magnet_thickness_mm: 3.0,
            magnet_grade: "N50".to_string(),
            marker_unit_cost_usd: 0.20,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<(), GridError> {
        let positive = [
            ("coil_size_mm", self.coil_size_mm),
            ("trace_width_mm", self.trace_width_mm),
            ("coil_current_amps.min", self.coil_current_amps.min),
            ("supply_volts", self.supply_volts),
            ("scan_period_ms.min", self.scan_period_ms.min),
            ("magnet_diameter_mm", self.magnet_diameter_mm),
            ("magnet_thickness_mm", self.magnet_thickness_mm),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(GridError::BadProfile(format!("{name} must be positive, got {v}")));
            }
        }
        if self.coil_turns == 0 {
            return Err(GridError::BadProfile("coil_turns must be positive".into()));
        }
        if self.marker_unit_cost_usd < 0.0 {
            return Err(GridError::BadProfile("marker_unit_cost_usd must be non-negative".into()));
        }
        for (name, span) in [("coil_current_amps", self.coil_current_amps), ("scan_period_ms", self.scan_period_ms)] {
            if span.min > span.max {
                return Err(GridError::BadProfile(format!("{name} range is inverted")));
            }
        }
        Ok(())
    }
}

/// One module of the board as stored in a grid description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulePlacement {
    pub id: ModuleId,
    pub rows: u32,
    pub cols: u32,
    pub origin_mm: [f64; 2],
}

/// A module to be tiled, carrying its own pitch so mismatches can be caught.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlacement {
    pub id: ModuleId,
    pub rows: u32,
    pub cols: u32,
    pub pitch_mm: f64,
    pub origin_mm: [f64; 2],
}

/// Serialized form of a [`CoilGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub modules: Vec<ModulePlacement>,
    pub pitch_mm: f64,
    pub profile: HardwareProfile,
}

#[derive(Debug, Clone)]
struct ModuleIndex {
    placement: ModulePlacement,
    base: u32,
    lattice_x: i64,
    lattice_y: i64,
}

impl ModuleIndex {
    fn coils_per_layer(&self) -> u32 {
        self.placement.rows * self.placement.cols
    }
}

/// Immutable coil lattice. Cheap to share behind an `Arc`.
#[derive(Debug, Clone)]
pub struct CoilGrid {
    modules: Vec<ModuleIndex>,
    pitch_mm: f64,
    profile: HardwareProfile,
    total: u32,
    adjacency: Vec<Vec<CoilId>>,
    half_coords: Vec<(i64, i64)>,
}

impl PartialEq for CoilGrid {
    fn eq(&self, other: &Self) -> bool {
        self.to_file() == other.to_file()
    }
}

const LATTICE_EPS: f64 = 1e-9;

impl CoilGrid {
    /// Single-module grid whose pitch is `board_size_mm / cols`.
    pub fn build(rows: u32, cols: u32, board_size_mm: f64, profile: HardwareProfile) -> Result<Self, GridError> {
        if rows < 2 || cols < 2 {
            return Err(GridError::TooSmall { rows, cols });
        }
        if board_size_mm <= 0.0 || !board_size_mm.is_finite() {
            return Err(GridError::BadBoardSize(board_size_mm));
        }
        let placement = ModulePlacement { id: ModuleId(0), rows, cols, origin_mm: [0.0, 0.0] };
        Self::from_modules(vec![placement], board_size_mm / cols as f64, profile)
    }

    /// Prototype board: 16x16 coils per layer on 150 mm.
    pub fn prototype() -> Self {
        Self::build(16, 16, 150.0, HardwareProfile::default()).expect("prototype grid is valid")
    }

    /// Merges modules into one board. All placements must share a pitch.
    pub fn tile(placements: &[TilePlacement], profile: HardwareProfile) -> Result<Self, GridError> {
        let first = placements.first().ok_or(GridError::Empty)?;
        let pitch = first.pitch_mm;
        for p in placements {
            if (p.pitch_mm - pitch).abs() > LATTICE_EPS * pitch.max(1.0) {
                return Err(GridError::PitchMismatch { module: p.id, expected: pitch, found: p.pitch_mm });
            }
        }
        let modules = placements
            .iter()
            .map(|p| ModulePlacement { id: p.id, rows: p.rows, cols: p.cols, origin_mm: p.origin_mm })
            .collect();
        Self::from_modules(modules, pitch, profile)
    }

    pub fn from_modules(modules: Vec<ModulePlacement>, pitch_mm: f64, profile: HardwareProfile) -> Result<Self, GridError> {
        profile.validate()?;
        if modules.is_empty() {
            return Err(GridError::Empty);
        }
        if pitch_mm <= 0.0 || !pitch_mm.is_finite() {
            return Err(GridError::BadBoardSize(pitch_mm));
        }
        let mut seen = HashSet::new();
        let mut index = Vec::with_capacity(modules.len());
        let mut base = 0u32;
        for m in modules {
            if !seen.insert(m.id) {
                return Err(GridError::DuplicateModule(m.id));
            }
            if m.rows < 2 || m.cols < 2 {
                return Err(GridError::TooSmall { rows: m.rows, cols: m.cols });
            }
            let lx = m.origin_mm[0] / pitch_mm;
            let ly = m.origin_mm[1] / pitch_mm;
            if (lx - lx.round()).abs() > 1e-6 || (ly - ly.round()).abs() > 1e-6 {
                return Err(GridError::Misaligned(m.id));
            }
            let entry = ModuleIndex { lattice_x: lx.round() as i64, lattice_y: ly.round() as i64, base, placement: m };
            base += 2 * entry.coils_per_layer();
            index.push(entry);
        }
        for (i, a) in index.iter().enumerate() {
            for b in &index[i + 1..] {
                let ax = (a.lattice_x, a.lattice_x + a.placement.cols as i64);
                let ay = (a.lattice_y, a.lattice_y + a.placement.rows as i64);
                let bx = (b.lattice_x, b.lattice_x + b.placement.cols as i64);
                let by = (b.lattice_y, b.lattice_y + b.placement.rows as i64);
                if ax.0 < bx.1 && bx.0 < ax.1 && ay.0 < by.1 && by.0 < ay.1 {
                    return Err(GridError::Overlap(a.placement.id, b.placement.id));
                }
            }
        }

        let mut grid = CoilGrid { modules: index, pitch_mm, profile, total: base, adjacency: Vec::new(), half_coords: Vec::new() };
        grid.index_adjacency();
        Ok(grid)
    }

    fn index_adjacency(&mut self) {
        let mut half_coords = Vec::with_capacity(self.total as usize);
        let mut lattice = HashMap::with_capacity(self.total as usize);
        for id in 0..self.total {
            let addr = self.addr_of(CoilId(id)).expect("dense ids");
            let m = self.module_index(addr.module).expect("known module");
            let gx = m.lattice_x + addr.col as i64;
            let gy = m.lattice_y + addr.row as i64;
            let hc = match addr.layer {
                Layer::Top => (2 * gx + 1, 2 * gy + 1),
                Layer::Bottom => (2 * gx + 2, 2 * gy + 2),
            };
            half_coords.push(hc);
            lattice.insert(hc, CoilId(id));
        }
        let adjacency = half_coords
            .iter()
            .map(|&(hx, hy)| {
                let mut ns: Vec<CoilId> = [(-1, -1), (-1, 1), (1, -1), (1, 1)]
                    .iter()
                    .filter_map(|(dx, dy)| lattice.get(&(hx + dx, hy + dy)).copied())
                    .collect();
                ns.sort();
                ns
            })
            .collect();
        self.half_coords = half_coords;
        self.adjacency = adjacency;
    }

    fn module_index(&self, id: ModuleId) -> Result<&ModuleIndex, GridError> {
        self.modules.iter().find(|m| m.placement.id == id).ok_or(GridError::UnknownModule(id))
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    pub fn profile(&self) -> &HardwareProfile {
        &self.profile
    }

    pub fn modules(&self) -> impl Iterator<Item = &ModulePlacement> {
        self.modules.iter().map(|m| &m.placement)
    }

    pub fn module(&self, id: ModuleId) -> Result<&ModulePlacement, GridError> {
        self.module_index(id).map(|m| &m.placement)
    }

    pub fn coil_count(&self) -> u32 {
        self.total
    }

    pub fn max_id(&self) -> CoilId {
        CoilId(self.total - 1)
    }

    pub fn coil_ids(&self) -> impl Iterator<Item = CoilId> {
        (0..self.total).map(CoilId)
    }

    pub fn validate(&self, addr: CoilAddress) -> Result<(), GridError> {
        let m = self.module_index(addr.module)?;
        if addr.row >= m.placement.rows || addr.col >= m.placement.cols {
            return Err(GridError::OutOfRange { module: addr.module, row: addr.row, col: addr.col });
        }
        Ok(())
    }

    pub fn contains_id(&self, id: CoilId) -> bool {
        id.0 < self.total
    }

    pub fn coil_id(&self, addr: CoilAddress) -> Result<CoilId, GridError> {
        self.validate(addr)?;
        let m = self.module_index(addr.module)?;
        let per_layer = m.coils_per_layer();
        Ok(CoilId(m.base + addr.layer.index() * per_layer + addr.row * m.placement.cols + addr.col))
    }

    pub fn addr_of(&self, id: CoilId) -> Result<CoilAddress, GridError> {
        let m = self
            .modules
            .iter()
            .find(|m| id.0 >= m.base && id.0 < m.base + 2 * m.coils_per_layer())
            .ok_or(GridError::UnknownCoil(id.0))?;
        let local = id.0 - m.base;
        let per_layer = m.coils_per_layer();
        let layer = if local < per_layer { Layer::Top } else { Layer::Bottom };
        let within = local % per_layer;
        Ok(CoilAddress {
            module: m.placement.id,
            layer,
            row: within / m.placement.cols,
            col: within % m.placement.cols,
        })
    }

    pub fn coil_center(&self, addr: CoilAddress) -> Result<Point, GridError> {
        self.validate(addr)?;
        let m = self.module_index(addr.module)?;
        let p = self.pitch_mm;
        let [ox, oy] = m.placement.origin_mm;
        let mut x = ox + addr.col as f64 * p + p / 2.0;
        let mut y = oy + addr.row as f64 * p + p / 2.0;
        if addr.layer == Layer::Bottom {
            x += p / 2.0;
            y += p / 2.0;
        }
        Ok(Point::new(x, y))
    }

    pub fn center_of(&self, id: CoilId) -> Result<Point, GridError> {
        self.coil_center(self.addr_of(id)?)
    }

    /// Opposite-layer coils a magnet can hop to, sorted by packed ID.
    pub fn neighbors(&self, addr: CoilAddress) -> Result<Vec<CoilAddress>, GridError> {
        let id = self.coil_id(addr)?;
        self.neighbor_ids(id)?.iter().map(|&n| self.addr_of(n)).collect()
    }

    pub fn neighbor_ids(&self, id: CoilId) -> Result<&[CoilId], GridError> {
        self.adjacency.get(id.0 as usize).map(Vec::as_slice).ok_or(GridError::UnknownCoil(id.0))
    }

    /// Adjacency without bounds checking; `id` must come from this grid.
    pub(crate) fn adj(&self, id: CoilId) -> &[CoilId] {
        &self.adjacency[id.0 as usize]
    }

    pub fn are_adjacent(&self, a: CoilId, b: CoilId) -> bool {
        self.adjacency.get(a.0 as usize).is_some_and(|ns| ns.binary_search(&b).is_ok())
    }

    /// Position on the global half-pitch lattice. TOP coils have odd
    /// coordinates, BOTTOM coils even ones.
    pub fn half_lattice(&self, id: CoilId) -> Option<(i64, i64)> {
        self.half_coords.get(id.0 as usize).copied()
    }

    pub fn on_board(&self, p: Point) -> bool {
        let pitch = self.pitch_mm;
        self.modules.iter().any(|m| {
            let [ox, oy] = m.placement.origin_mm;
            p.x >= ox - LATTICE_EPS
                && p.y >= oy - LATTICE_EPS
                && p.x <= ox + m.placement.cols as f64 * pitch + LATTICE_EPS
                && p.y <= oy + m.placement.rows as f64 * pitch + LATTICE_EPS
        })
    }

    /// Lower-left and upper-right corners of the board's bounding box.
    pub fn bounds(&self) -> (Point, Point) {
        let pitch = self.pitch_mm;
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for m in &self.modules {
            let [ox, oy] = m.placement.origin_mm;
            lo.x = lo.x.min(ox);
            lo.y = lo.y.min(oy);
            hi.x = hi.x.max(ox + m.placement.cols as f64 * pitch);
            hi.y = hi.y.max(oy + m.placement.rows as f64 * pitch);
        }
        (lo, hi)
    }

    /// Coil whose centre is nearest to `p`; ties go to the lower packed ID.
    pub fn nearest_coil(&self, p: Point) -> CoilId {
        let mut best = CoilId(0);
        let mut best_d = f64::INFINITY;
        for id in self.coil_ids() {
            let d = self.center_of(id).expect("dense ids").distance(p);
            if d < best_d - 1e-9 {
                best = id;
                best_d = d;
            }
        }
        best
    }

    pub fn to_file(&self) -> GridFile {
        GridFile {
            modules: self.modules.iter().map(|m| m.placement.clone()).collect(),
            pitch_mm: self.pitch_mm,
            profile: self.profile.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GridFileError> {
        let file: GridFile = serde_json::from_str(text)?;
        Ok(Self::try_from(file)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("grid file serializes")
    }
}

#[derive(Debug, Error)]
pub enum GridFileError {
    #[error("malformed grid file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl TryFrom<GridFile> for CoilGrid {
    type Error = GridError;

    fn try_from(file: GridFile) -> Result<Self, Self::Error> {
        CoilGrid::from_modules(file.modules, file.pitch_mm, file.profile)
    }
}

impl Serialize for CoilGrid {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoilGrid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = GridFile::deserialize(deserializer)?;
        CoilGrid::try_from(file).map_err(serde::de::Error::custom)
    }
}
