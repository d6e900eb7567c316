//! Parts cost model for boards built from 16x16 coil modules.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODULE_ROWS: u32 = 16;
pub const MODULE_COLS: u32 = 16;

// Per-module part counts of the prototype board.
const MOSFETS_PER_MODULE: f64 = 32.0;
const DIODES_PER_MODULE: f64 = 128.0;
const SHIFT_REGISTERS_PER_MODULE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Mosfet,
    Diode,
    ShiftRegister,
    Pcb,
    Microcontroller,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Mosfet => "MOSFETs",
            Part::Diode => "diodes",
            Part::ShiftRegister => "shift registers",
            Part::Pcb => "PCB",
            Part::Microcontroller => "microcontroller",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BomError {
    #[error("grid dimensions must be positive, got {0}x{1}")]
    Empty(u32, u32),
    #[error("unknown part '{0}' in price table")]
    UnknownPart(String),
    #[error("price table has no entry for '{0}'")]
    MissingPrice(&'static str),
    #[error("price for '{0}' must be a non-negative number")]
    BadPrice(String),
}

const PRICE_KEYS: [&str; 6] =
    ["mosfet", "diode", "shift_register", "pcb_per_module", "pcb_minimum_order", "microcontroller"];

/// Unit prices in USD keyed by part name.
///
/// The defaults reproduce the 160x160 parts list exactly: 3200 MOSFETs at
/// 0.04, 12800 diodes at 147/12800, 400 shift registers at 0.05, 100 module
/// PCBs at 2.00 and one 15 USD controller. PCB fabrication also carries a
/// minimum order charge, which dominates for a single module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, f64>);

impl Default for PriceTable {
    fn default() -> Self {
        let prices = [
            ("mosfet", 0.04),
            ("diode", 147.0 / 12800.0),
            ("shift_register", 0.05),
            ("pcb_per_module", 2.0),
            ("pcb_minimum_order", 20.0),
            ("microcontroller", 15.0),
        ];
        Self(prices.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

impl PriceTable {
    fn validate(&self) -> Result<(), BomError> {
        for (k, v) in &self.0 {
            if !PRICE_KEYS.contains(&k.as_str()) {
                return Err(BomError::UnknownPart(k.clone()));
            }
            if *v < 0.0 || !v.is_finite() {
                return Err(BomError::BadPrice(k.clone()));
            }
        }
        Ok(())
    }

    fn get(&self, key: &'static str) -> Result<f64, BomError> {
        self.0.get(key).copied().ok_or(BomError::MissingPrice(key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub count: u64,
    pub unit_cost_usd: f64,
    pub subtotal_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomEstimate {
    pub rows: u32,
    pub cols: u32,
    /// Board area in units of one 16x16 module; fractional when extrapolated.
    pub modules: f64,
    /// Set when the grid is not a whole number of modules and counts were
    /// scaled linearly from the per-module list.
    pub extrapolated: bool,
    pub line_items: BTreeMap<Part, LineItem>,
    pub total_usd: f64,
}

fn cents(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn item(count: u64, unit: f64) -> LineItem {
    LineItem { count, unit_cost_usd: unit, subtotal_usd: cents(count as f64 * unit) }
}

pub fn estimate_bom(rows: u32, cols: u32, prices: &PriceTable) -> Result<BomEstimate, BomError> {
    if rows == 0 || cols == 0 {
        return Err(BomError::Empty(rows, cols));
    }
    prices.validate()?;
    let extrapolated = !rows.is_multiple_of(MODULE_ROWS) || !cols.is_multiple_of(MODULE_COLS);
    let modules = (rows as f64 * cols as f64) / (MODULE_ROWS as f64 * MODULE_COLS as f64);
    let scaled = |per_module: f64| (per_module * modules - 1e-9).ceil().max(1.0) as u64;

    let mut items = BTreeMap::new();
    items.insert(Part::Mosfet, item(scaled(MOSFETS_PER_MODULE), prices.get("mosfet")?));
    items.insert(Part::Diode, item(scaled(DIODES_PER_MODULE), prices.get("diode")?));
    items.insert(Part::ShiftRegister, item(scaled(SHIFT_REGISTERS_PER_MODULE), prices.get("shift_register")?));

    let panels = scaled(1.0);
    let pcb_total = (prices.get("pcb_per_module")? * modules).max(prices.get("pcb_minimum_order")?);
    items.insert(Part::Pcb, item(panels, pcb_total / panels as f64));
    items.insert(Part::Microcontroller, item(1, prices.get("microcontroller")?));

    let total_usd = cents(items.values().map(|i| i.subtotal_usd).sum());
    Ok(BomEstimate { rows, cols, modules, extrapolated, line_items: items, total_usd })
}
