//! Authored content: configurations, command bindings, sequences and
//! imported graphics, persisted as one JSON document.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use coilboard_core::grid::{CoilAddress, CoilGrid, CoilId, Point};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Where a marker should go: a packed coil id, a coil address, or a board
/// point snapped to the nearest coil centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Id { coil_id: u32 },
    Address(CoilAddress),
    Point { x_mm: f64, y_mm: f64 },
}

impl TargetSpec {
    pub fn resolve(&self, grid: &CoilGrid) -> Result<CoilId, ServiceError> {
        match *self {
            TargetSpec::Id { coil_id } => {
                let id = CoilId(coil_id);
                if grid.contains_id(id) {
                    Ok(id)
                } else {
                    Err(ServiceError::not_found("coil", coil_id.to_string()))
                }
            }
            TargetSpec::Address(addr) => Ok(grid.coil_id(addr)?),
            TargetSpec::Point { x_mm, y_mm } => {
                let p = Point::new(x_mm, y_mm);
                if !x_mm.is_finite() || !y_mm.is_finite() || !grid.on_board(p) {
                    return Err(ServiceError::Validation(format!("point ({x_mm}, {y_mm}) is off the board")));
                }
                Ok(grid.nearest_coil(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StaticElement {
    Polyline { points: Vec<[f64; 2]> },
    Polygon { points: Vec<[f64; 2]> },
    /// Reference to an imported graphic by name.
    Graphic { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub name: String,
    #[serde(default)]
    pub static_elements: Vec<StaticElement>,
    #[serde(default)]
    pub marker_targets: Vec<TargetSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BindingKind {
    Render,
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandBinding {
    pub trigger: String,
    /// Configuration name for RENDER bindings, sequence name for SEQUENCE.
    pub configuration: String,
    pub kind: BindingKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub name: String,
    pub steps: Vec<String>,
    #[serde(default)]
    pub current_step: usize,
    /// False until the first step has been rendered; the first NEXT shows
    /// step 0 rather than skipping it.
    #[serde(default)]
    pub started: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graphic {
    pub name: String,
    pub elements: Vec<StaticElement>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContentStore {
    #[serde(default)]
    pub configurations: BTreeMap<String, Configuration>,
    #[serde(default)]
    pub bindings: BTreeMap<String, CommandBinding>,
    #[serde(default)]
    pub sequences: BTreeMap<String, Sequence>,
    #[serde(default)]
    pub graphics: BTreeMap<String, Graphic>,
}

pub fn check_name(kind: &str, name: &str) -> Result<(), ServiceError> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Validation(format!("{kind} name '{name}' must be 1-128 characters of [A-Za-z0-9._-]")))
    }
}

fn check_points(grid: &CoilGrid, points: &[[f64; 2]]) -> Result<(), ServiceError> {
    if points.len() < 2 {
        return Err(ServiceError::Validation("static elements need at least two points".into()));
    }
    for &[x, y] in points {
        if !x.is_finite() || !y.is_finite() || !grid.on_board(Point::new(x, y)) {
            return Err(ServiceError::Validation(format!("static point ({x}, {y}) is off the board")));
        }
    }
    Ok(())
}

/// Resolves targets to coils and checks that every pair can be held at once:
/// distinct coils that are not neighbors.
pub fn resolve_targets(grid: &CoilGrid, targets: &[TargetSpec]) -> Result<Vec<CoilId>, ServiceError> {
    let coils = targets.iter().map(|t| t.resolve(grid)).collect::<Result<Vec<_>, _>>()?;
    for (i, a) in coils.iter().enumerate() {
        for b in &coils[i + 1..] {
            if a == b {
                return Err(ServiceError::Validation(format!("two targets snap to coil {a}")));
            }
            if grid.are_adjacent(*a, *b) {
                return Err(ServiceError::Validation(format!("targets on coils {a} and {b} are too close to hold both")));
            }
        }
    }
    Ok(coils)
}

impl ContentStore {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        match std::fs::read_to_string(path) {
            Ok(text) if text.trim().is_empty() => Ok(Self::default()),
            Ok(text) => serde_json::from_str(&text).map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(ServiceError::Storage(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes to a temporary file in the same directory, then renames it over
    /// `path`, so readers see either the old or the new document.
    pub fn save(&self, path: &Path) -> Result<(), ServiceError> {
        let storage = |e: std::io::Error| ServiceError::Storage(format!("{}: {e}", path.display()));
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(storage)?;
        let text = serde_json::to_string_pretty(self).expect("content serializes");
        tmp.write_all(text.as_bytes()).map_err(storage)?;
        tmp.as_file().sync_all().map_err(storage)?;
        tmp.persist(path).map_err(|e| storage(e.error))?;
        Ok(())
    }

    pub fn validate_configuration(&self, grid: &CoilGrid, config: &Configuration) -> Result<Vec<CoilId>, ServiceError> {
        check_name("configuration", &config.name)?;
        for el in &config.static_elements {
            match el {
                StaticElement::Polyline { points } | StaticElement::Polygon { points } => check_points(grid, points)?,
                StaticElement::Graphic { name } => {
                    if !self.graphics.contains_key(name) {
                        return Err(ServiceError::not_found("graphic", name.clone()));
                    }
                }
            }
        }
        resolve_targets(grid, &config.marker_targets)
    }

    pub fn put_configuration(&mut self, grid: &CoilGrid, config: Configuration) -> Result<(), ServiceError> {
        self.validate_configuration(grid, &config)?;
        self.configurations.insert(config.name.clone(), config);
        Ok(())
    }

    pub fn delete_configuration(&mut self, name: &str) -> Result<Configuration, ServiceError> {
        if let Some(b) = self.bindings.values().find(|b| b.kind == BindingKind::Render && b.configuration == name) {
            return Err(ServiceError::Conflict(format!("configuration '{name}' is used by binding '{}'", b.trigger)));
        }
        if let Some(s) = self.sequences.values().find(|s| s.steps.iter().any(|c| c == name)) {
            return Err(ServiceError::Conflict(format!("configuration '{name}' is used by sequence '{}'", s.name)));
        }
        self.configurations.remove(name).ok_or_else(|| ServiceError::not_found("configuration", name))
    }

    pub fn put_binding(&mut self, binding: CommandBinding) -> Result<(), ServiceError> {
        if binding.trigger.trim().is_empty() {
            return Err(ServiceError::Validation("trigger text must not be empty".into()));
        }
        let known = match binding.kind {
            BindingKind::Render => self.configurations.contains_key(&binding.configuration),
            BindingKind::Sequence => self.sequences.contains_key(&binding.configuration),
        };
        if !known {
            let kind = if binding.kind == BindingKind::Render { "configuration" } else { "sequence" };
            return Err(ServiceError::not_found(kind, binding.configuration));
        }
        self.bindings.insert(binding.trigger.clone(), binding);
        Ok(())
    }

    pub fn delete_binding(&mut self, trigger: &str) -> Result<CommandBinding, ServiceError> {
        self.bindings.remove(trigger).ok_or_else(|| ServiceError::not_found("binding", trigger))
    }

    pub fn put_sequence(&mut self, seq: Sequence) -> Result<(), ServiceError> {
        check_name("sequence", &seq.name)?;
        if seq.steps.is_empty() {
            return Err(ServiceError::Validation("a sequence needs at least one step".into()));
        }
        if seq.current_step >= seq.steps.len() {
            return Err(ServiceError::Validation(format!("current_step {} out of range", seq.current_step)));
        }
        for step in &seq.steps {
            if !self.configurations.contains_key(step) {
                return Err(ServiceError::not_found("configuration", step.clone()));
            }
        }
        self.sequences.insert(seq.name.clone(), seq);
        Ok(())
    }

    pub fn delete_sequence(&mut self, name: &str) -> Result<Sequence, ServiceError> {
        if let Some(b) = self.bindings.values().find(|b| b.kind == BindingKind::Sequence && b.configuration == name) {
            return Err(ServiceError::Conflict(format!("sequence '{name}' is used by binding '{}'", b.trigger)));
        }
        self.sequences.remove(name).ok_or_else(|| ServiceError::not_found("sequence", name))
    }

    pub fn put_graphic(&mut self, grid: &CoilGrid, graphic: Graphic) -> Result<(), ServiceError> {
        check_name("graphic", &graphic.name)?;
        for el in &graphic.elements {
            match el {
                StaticElement::Polyline { points } | StaticElement::Polygon { points } => check_points(grid, points)?,
                StaticElement::Graphic { .. } => {
                    return Err(ServiceError::Validation("graphics cannot reference other graphics".into()))
                }
            }
        }
        self.graphics.insert(graphic.name.clone(), graphic);
        Ok(())
    }

    pub fn delete_graphic(&mut self, name: &str) -> Result<Graphic, ServiceError> {
        let users: BTreeSet<&str> = self
            .configurations
            .values()
            .filter(|c| c.static_elements.iter().any(|e| matches!(e, StaticElement::Graphic { name: n } if n == name)))
            .map(|c| c.name.as_str())
            .collect();
        if let Some(user) = users.first() {
            return Err(ServiceError::Conflict(format!("graphic '{name}' is used by configuration '{user}'")));
        }
        self.graphics.remove(name).ok_or_else(|| ServiceError::not_found("graphic", name))
    }

    /// Known triggers within edit distance 2 of `text`, closest first.
    pub fn suggest_triggers(&self, text: &str) -> Vec<String> {
        let mut scored: Vec<(usize, &String)> = self
            .bindings
            .keys()
            .map(|k| (strsim::levenshtein(k, text), k))
            .filter(|(d, _)| *d <= 2)
            .collect();
        scored.sort();
        scored.into_iter().map(|(_, k)| k.clone()).collect()
    }
}
