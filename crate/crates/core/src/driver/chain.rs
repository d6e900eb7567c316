//! Daisy-chained serial-in/parallel-out shift registers feeding the
//! half-bridge gates.
//!
//! Every matrix line is a push-pull pair, so each line owns two register
//! outputs: one for the P-channel gate and one for the N-channel gate. A line
//! is HIGH when the P side conducts (P gate 0, N gate 0) and LOW when the N
//! side conducts (P gate 1, N gate 1). The two mixed combinations would
//! either short the supply or float the line and never appear in a valid
//! image.
//!
//! Bits go out MSB first. Register 0 sits next to the controller, so the
//! first bit shifted ends up in bit 7 of the last register once the chain is
//! full and latched.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DrivePattern, Level};
use crate::grid::{Layer, ModuleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Line {
    Row(u32),
    Col(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gate {
    P,
    N,
}

/// Output `bit` (0..8) of register `register` (0 = nearest the controller).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub register: u32,
    pub bit: u8,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("line {0:?} gate {1:?} has no register slot")]
    Unmapped(Line, Gate),
    #[error("slot {0:?} is assigned twice")]
    SlotCollision(Slot),
    #[error("slot {0:?} outside a chain of {1} registers")]
    SlotOutOfRange(Slot, u32),
    #[error("layout is for {expected}, pattern is for {found}")]
    Mismatch { expected: String, found: String },
    #[error("half-bridge for {0:?} has P={1} N={2}, which is not a valid drive state")]
    InvalidHalfBridge(Line, bool, bool),
    #[error("image has {found} bits, chain needs {expected}")]
    Length { expected: usize, found: usize },
    #[error("bad hex image: {0}")]
    Hex(String),
}

/// Assignment of every gate line of one layer matrix to a register output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLayout {
    pub module: ModuleId,
    pub layer: Layer,
    pub rows: u32,
    pub cols: u32,
    pub register_count: u32,
    pub assignments: Vec<(Line, Gate, Slot)>,
}

impl ChainLayout {
    /// Rows then columns, P gate before N gate, filling register 0 from bit 0
    /// upward and spilling into later registers.
    pub fn sequential(module: ModuleId, layer: Layer, rows: u32, cols: u32) -> Self {
        let lines = (0..rows).map(Line::Row).chain((0..cols).map(Line::Col));
        let mut assignments = Vec::new();
        let mut k = 0u32;
        for line in lines {
            for gate in [Gate::P, Gate::N] {
                assignments.push((line, gate, Slot { register: k / 8, bit: (k % 8) as u8 }));
                k += 1;
            }
        }
        Self { module, layer, rows, cols, register_count: k.div_ceil(8), assignments }
    }

    pub fn bit_len(&self) -> usize {
        8 * self.register_count as usize
    }

    fn slot_map(&self) -> Result<HashMap<(Line, Gate), Slot>, ChainError> {
        let mut by_line = HashMap::new();
        let mut used = HashMap::new();
        for &(line, gate, slot) in &self.assignments {
            if slot.register >= self.register_count || slot.bit > 7 {
                return Err(ChainError::SlotOutOfRange(slot, self.register_count));
            }
            if used.insert(slot, (line, gate)).is_some() {
                return Err(ChainError::SlotCollision(slot));
            }
            by_line.insert((line, gate), slot);
        }
        let lines = (0..self.rows).map(Line::Row).chain((0..self.cols).map(Line::Col));
        for line in lines {
            for gate in [Gate::P, Gate::N] {
                if !by_line.contains_key(&(line, gate)) {
                    return Err(ChainError::Unmapped(line, gate));
                }
            }
        }
        Ok(by_line)
    }

    /// Position of a slot in the shifted bit stream.
    fn stream_index(&self, slot: Slot) -> usize {
        let from_far_end = (self.register_count - 1 - slot.register) as usize;
        from_far_end * 8 + (7 - slot.bit as usize)
    }

    fn check_pattern(&self, p: &DrivePattern) -> Result<(), ChainError> {
        let describe = |m: ModuleId, l: Layer, r: usize, c: usize| format!("module {m} {l} {r}x{c}");
        if p.module != self.module
            || p.layer != self.layer
            || p.row_levels.len() != self.rows as usize
            || p.col_levels.len() != self.cols as usize
        {
            return Err(ChainError::Mismatch {
                expected: describe(self.module, self.layer, self.rows as usize, self.cols as usize),
                found: describe(p.module, p.layer, p.row_levels.len(), p.col_levels.len()),
            });
        }
        Ok(())
    }
}

/// Bits in shift order plus the latch point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftChainImage {
    pub bits: Vec<bool>,
    pub register_count: u32,
    pub latch_after: usize,
}

impl ShiftChainImage {
    /// Hex of the shifted bytes, farthest register first, MSB first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.bits.len() / 4);
        for byte in self.bits.chunks(8) {
            let v = byte.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
            write!(s, "{v:02x}").unwrap();
        }
        s
    }

    pub fn from_hex(hex: &str) -> Result<Self, ChainError> {
        let hex = hex.trim();
        if !hex.len().is_multiple_of(2) || hex.is_empty() {
            return Err(ChainError::Hex(format!("expected whole bytes, got {} digits", hex.len())));
        }
        let mut bits = Vec::with_capacity(hex.len() * 4);
        for i in (0..hex.len()).step_by(2) {
            let byte = u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| ChainError::Hex(e.to_string()))?;
            bits.extend((0..8).rev().map(|k| byte >> k & 1 == 1));
        }
        let register_count = (bits.len() / 8) as u32;
        Ok(Self { latch_after: bits.len(), bits, register_count })
    }
}

fn gate_bits(level: Level) -> (bool, bool) {
    match level {
        Level::High => (false, false),
        Level::Low => (true, true),
    }
}

pub fn serialize_to_shift_chain(pattern: &DrivePattern, layout: &ChainLayout) -> Result<ShiftChainImage, ChainError> {
    layout.check_pattern(pattern)?;
    let slots = layout.slot_map()?;
    let mut bits = vec![false; layout.bit_len()];
    let lines = pattern
        .row_levels
        .iter()
        .enumerate()
        .map(|(i, l)| (Line::Row(i as u32), *l))
        .chain(pattern.col_levels.iter().enumerate().map(|(i, l)| (Line::Col(i as u32), *l)));
    for (line, level) in lines {
        let (p, n) = gate_bits(level);
        bits[layout.stream_index(slots[&(line, Gate::P)])] = p;
        bits[layout.stream_index(slots[&(line, Gate::N)])] = n;
    }
    Ok(ShiftChainImage { latch_after: bits.len(), bits, register_count: layout.register_count })
}

pub fn deserialize_shift_chain(image: &ShiftChainImage, layout: &ChainLayout) -> Result<DrivePattern, ChainError> {
    if image.bits.len() != layout.bit_len() {
        return Err(ChainError::Length { expected: layout.bit_len(), found: image.bits.len() });
    }
    let slots = layout.slot_map()?;
    let read = |line: Line| -> Result<Level, ChainError> {
        let p = image.bits[layout.stream_index(slots[&(line, Gate::P)])];
        let n = image.bits[layout.stream_index(slots[&(line, Gate::N)])];
        match (p, n) {
            (false, false) => Ok(Level::High),
            (true, true) => Ok(Level::Low),
            _ => Err(ChainError::InvalidHalfBridge(line, p, n)),
        }
    };
    Ok(DrivePattern {
        module: layout.module,
        layer: layout.layer,
        row_levels: (0..layout.rows).map(|r| read(Line::Row(r))).collect::<Result<_, _>>()?,
        col_levels: (0..layout.cols).map(|c| read(Line::Col(c))).collect::<Result<_, _>>()?,
    })
}
