//! Row-multiplexed coil drive.
//!
//! Each (module, layer) pair is a diode matrix with one half-bridge per row
//! line and one per column line. A coil conducts when its row is driven HIGH
//! and its column LOW, so a single frame can only energize coils that share a
//! row. Arbitrary coil sets are realised by scanning rows over time.

mod bom;
mod chain;

pub use bom::{estimate_bom, BomError, BomEstimate, LineItem, Part, PriceTable, MODULE_COLS, MODULE_ROWS};
pub use chain::{
    deserialize_shift_chain, serialize_to_shift_chain, ChainError, ChainLayout, Gate, Line, ShiftChainImage, Slot,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CoilAddress, CoilGrid, CoilId, GridError, Layer, ModuleId, Span};

/// Default frame dwell in milliseconds.
pub const DEFAULT_DWELL_MS: u64 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum DriveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("coils span rows {0} and {1}; split them into separate frames")]
    MultipleRows(u32, u32),
    #[error("dwell {dwell_ms} ms outside scan range {min}..={max} ms")]
    DwellOutOfRange { dwell_ms: u64, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    High,
    Low,
}

/// Electrical state of every row and column line of one layer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DrivePattern {
    pub module: ModuleId,
    pub layer: Layer,
    pub row_levels: Vec<Level>,
    pub col_levels: Vec<Level>,
}

impl DrivePattern {
    /// All rows LOW, all columns HIGH: nothing conducts.
    pub fn idle(module: ModuleId, layer: Layer, rows: u32, cols: u32) -> Self {
        Self {
            module,
            layer,
            row_levels: vec![Level::Low; rows as usize],
            col_levels: vec![Level::High; cols as usize],
        }
    }

    pub fn high_rows(&self) -> usize {
        self.row_levels.iter().filter(|l| **l == Level::High).count()
    }

    pub fn is_row_exclusive(&self) -> bool {
        self.high_rows() <= 1
    }

    /// `(row, col)` pairs that conduct under this pattern.
    pub fn energized(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (r, rl) in self.row_levels.iter().enumerate() {
            if *rl != Level::High {
                continue;
            }
            for (c, cl) in self.col_levels.iter().enumerate() {
                if *cl == Level::Low {
                    out.push((r as u32, c as u32));
                }
            }
        }
        out
    }

    pub fn energized_addresses(&self) -> impl Iterator<Item = CoilAddress> + '_ {
        self.energized()
            .into_iter()
            .map(|(row, col)| CoilAddress { module: self.module, layer: self.layer, row, col })
    }

    pub fn energized_ids(&self, grid: &CoilGrid) -> Result<Vec<CoilId>, GridError> {
        self.energized_addresses().map(|a| grid.coil_id(a)).collect()
    }

    /// Row mask, bit `r` set when row `r` is HIGH.
    pub fn row_mask_hex(&self) -> String {
        mask_hex(self.row_levels.iter().map(|l| *l == Level::High))
    }

    /// Column mask, bit `c` set when column `c` is HIGH.
    pub fn col_mask_hex(&self) -> String {
        mask_hex(self.col_levels.iter().map(|l| *l == Level::High))
    }
}

/// Little-endian bit list rendered as a `0x`-prefixed hex number.
fn mask_hex(bits: impl Iterator<Item = bool>) -> String {
    let mut nibbles: Vec<u8> = Vec::new();
    for (i, bit) in bits.enumerate() {
        if i % 4 == 0 {
            nibbles.push(0);
        }
        if bit {
            *nibbles.last_mut().unwrap() |= 1 << (i % 4);
        }
    }
    while nibbles.len() > 1 && *nibbles.last().unwrap() == 0 {
        nibbles.pop();
    }
    let mut s = String::from("0x");
    if nibbles.is_empty() {
        s.push('0');
    }
    for n in nibbles.iter().rev() {
        write!(s, "{n:x}").unwrap();
    }
    s
}

/// Drive pattern for a set of coils that all sit in one row of one layer.
pub fn encode_frame(
    grid: &CoilGrid,
    module: ModuleId,
    layer: Layer,
    coils: &[(u32, u32)],
) -> Result<DrivePattern, DriveError> {
    let placement = grid.module(module)?;
    let mut pattern = DrivePattern::idle(module, layer, placement.rows, placement.cols);
    let mut row: Option<u32> = None;
    for &(r, c) in coils {
        grid.validate(CoilAddress { module, layer, row: r, col: c })?;
        match row {
            Some(existing) if existing != r => return Err(DriveError::MultipleRows(existing.min(r), existing.max(r))),
            _ => row = Some(r),
        }
        pattern.col_levels[c as usize] = Level::Low;
    }
    if let Some(r) = row {
        pattern.row_levels[r as usize] = Level::High;
    }
    Ok(pattern)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub pattern: DrivePattern,
    pub dwell_ms: u64,
}

/// Timed list of drive patterns. A cycling schedule repeats until replaced.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameSchedule {
    pub frames: Vec<Frame>,
    pub cycle: bool,
}

impl FrameSchedule {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cycle_ms(&self) -> u64 {
        self.frames.iter().map(|f| f.dwell_ms).sum()
    }

    /// Union of coils energized by any frame.
    pub fn decode(&self) -> BTreeSet<CoilAddress> {
        self.frames.iter().flat_map(|f| f.pattern.energized_addresses()).collect()
    }

    pub fn decode_ids(&self, grid: &CoilGrid) -> Result<BTreeSet<CoilId>, GridError> {
        self.decode().into_iter().map(|a| grid.coil_id(a)).collect()
    }

    pub fn is_row_exclusive(&self) -> bool {
        self.frames.iter().all(|f| f.pattern.is_row_exclusive())
    }

    /// Appends `passes - 1` further copies of the frame list.
    pub fn repeated(mut self, passes: u32) -> Self {
        let once = self.frames.clone();
        for _ in 1..passes.max(1) {
            self.frames.extend(once.iter().cloned());
        }
        self
    }

    /// One line per frame: `module layer row_mask col_mask dwell_ms`.
    ///
    /// Masks are hex with bit `i` set when line `i` is HIGH (row 0 and
    /// column 0 are the least significant bits).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            writeln!(out, "{}", frame_dump_line(f)).unwrap();
        }
        out
    }
}

pub fn frame_dump_line(frame: &Frame) -> String {
    format!(
        "{} {} {} {} {}",
        frame.pattern.module,
        frame.pattern.layer,
        frame.pattern.row_mask_hex(),
        frame.pattern.col_mask_hex(),
        frame.dwell_ms
    )
}

pub fn check_dwell(scan: Span, dwell_ms: u64) -> Result<(), DriveError> {
    if scan.contains(dwell_ms as f64) {
        Ok(())
    } else {
        Err(DriveError::DwellOutOfRange { dwell_ms, min: scan.min, max: scan.max })
    }
}

/// Clamps a requested dwell into the profile's scan band.
pub fn clamp_dwell(scan: Span, dwell_ms: u64) -> u64 {
    scan.clamp(dwell_ms as f64).round() as u64
}

/// One frame per occupied (module, layer, row), ordered by module, layer
/// (TOP first) and row.
pub fn schedule_frames<'a>(
    grid: &CoilGrid,
    targets: impl IntoIterator<Item = &'a CoilAddress>,
    dwell_ms: u64,
) -> Result<FrameSchedule, DriveError> {
    check_dwell(grid.profile().scan_period_ms, dwell_ms)?;
    let mut rows: BTreeMap<(ModuleId, Layer, u32), Vec<(u32, u32)>> = BTreeMap::new();
    for a in targets {
        grid.validate(*a)?;
        rows.entry((a.module, a.layer, a.row)).or_default().push((a.row, a.col));
    }
    let frames = rows
        .into_iter()
        .map(|((module, layer, _), coils)| {
            encode_frame(grid, module, layer, &coils).map(|pattern| Frame { pattern, dwell_ms })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSchedule { frames, cycle: true })
}

/// Same as [`schedule_frames`] but from packed IDs.
pub fn schedule_ids<'a>(
    grid: &CoilGrid,
    targets: impl IntoIterator<Item = &'a CoilId>,
    dwell_ms: u64,
) -> Result<FrameSchedule, DriveError> {
    let addrs = targets.into_iter().map(|id| grid.addr_of(*id)).collect::<Result<Vec<_>, _>>()?;
    schedule_frames(grid, addrs.iter(), dwell_ms)
}

/// Controller pins needed to drive a rows x cols matrix.
///
/// Direct drive uses one pin per line. A shift chain needs serial data,
/// shift clock and latch regardless of length.
pub fn io_pin_count(rows: u32, cols: u32, use_shift_chain: bool) -> u32 {
    if use_shift_chain {
        3
    } else {
        rows + cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HardwareProfile;
    use proptest::prelude::*;

    const A: u32 = 0;
    const B: u32 = 1;

    fn grid4() -> CoilGrid {
        CoilGrid::build(4, 4, 40.0, HardwareProfile::default()).unwrap()
    }

    fn levels(s: &str) -> Vec<Level> {
        s.chars().map(|c| if c == 'H' { Level::High } else { Level::Low }).collect()
    }

    #[test]
    fn worked_example_row_a() {
        // columns 1 and 3 are indices 0 and 2
        let p = encode_frame(&grid4(), ModuleId(0), Layer::Top, &[(A, 0), (A, 2)]).unwrap();
        assert_eq!(p.row_levels, levels("HLLL"));
        assert_eq!(p.col_levels, levels("LHLH"));
        assert_eq!(p.energized(), vec![(A, 0), (A, 2)]);
    }

    #[test]
    fn worked_example_row_b() {
        let p = encode_frame(&grid4(), ModuleId(0), Layer::Top, &[(B, 0), (B, 3)]).unwrap();
        assert_eq!(p.row_levels, levels("LHLL"));
        assert_eq!(p.col_levels, levels("LHHL"));
    }

    #[test]
    fn empty_frame_is_idle() {
        let p = encode_frame(&grid4(), ModuleId(0), Layer::Bottom, &[]).unwrap();
        assert_eq!(p, DrivePattern::idle(ModuleId(0), Layer::Bottom, 4, 4));
        assert!(p.energized().is_empty());
    }

    #[test]
    fn frame_rejects_two_rows() {
        let err = encode_frame(&grid4(), ModuleId(0), Layer::Top, &[(0, 0), (1, 3)]).unwrap_err();
        assert_eq!(err, DriveError::MultipleRows(0, 1));
    }

    #[test]
    fn schedule_counts_rows() {
        let g = grid4();
        let one: BTreeSet<_> = [CoilAddress::top(A, 0), CoilAddress::top(A, 2)].into();
        assert_eq!(schedule_frames(&g, &one, 20).unwrap().frames.len(), 1);

        let two: BTreeSet<_> = [CoilAddress::top(B, 3), CoilAddress::top(A, 0)].into();
        let s = schedule_frames(&g, &two, 20).unwrap();
        assert_eq!(s.frames.len(), 2);
        assert_eq!(s.frames[0].pattern.row_levels, levels("HLLL"));
        assert_eq!(s.frames[1].pattern.row_levels, levels("LHLL"));
        assert_eq!(s.decode(), two);
        assert_eq!(s.cycle_ms(), 40);

        let empty: BTreeSet<CoilAddress> = BTreeSet::new();
        assert!(schedule_frames(&g, &empty, 20).unwrap().is_empty());
    }

    #[test]
    fn schedule_rejects_dwell_outside_scan_band() {
        let g = grid4();
        assert!(matches!(schedule_frames(&g, &[], 5), Err(DriveError::DwellOutOfRange { .. })));
        assert!(matches!(schedule_frames(&g, &[], 101), Err(DriveError::DwellOutOfRange { .. })));
        assert!(schedule_frames(&g, &[], 10).is_ok());
        assert!(schedule_frames(&g, &[], 100).is_ok());
        assert_eq!(clamp_dwell(g.profile().scan_period_ms, 3), 10);
        assert_eq!(clamp_dwell(g.profile().scan_period_ms, 500), 100);
    }

    #[test]
    fn pin_counts() {
        assert_eq!(io_pin_count(4, 4, false), 8);
        assert_eq!(io_pin_count(16, 16, false), 32);
        assert_eq!(io_pin_count(16, 16, true), 3);
    }

    #[test]
    fn dump_format() {
        let g = grid4();
        let s = schedule_frames(&g, &[CoilAddress::top(A, 0), CoilAddress::top(A, 2)], 20).unwrap();
        assert_eq!(s.dump(), "0 TOP 0x1 0xa 20\n");
        assert_eq!(mask_hex(std::iter::empty()), "0x0");
        assert_eq!(mask_hex((0..16).map(|i| i == 15)), "0x8000");
    }

    proptest! {
        #[test]
        fn schedules_are_row_exclusive_and_ghost_free(
            picks in proptest::collection::btree_set(0u32..512, 0..60),
            dwell in 10u64..=100,
        ) {
            let g = CoilGrid::prototype();
            let targets: BTreeSet<CoilAddress> = picks.iter().map(|&i| g.addr_of(CoilId(i)).unwrap()).collect();
            let s = schedule_frames(&g, &targets, dwell).unwrap();
            prop_assert!(s.is_row_exclusive());
            prop_assert_eq!(s.decode(), targets.clone());
            let rows: BTreeSet<_> = targets.iter().map(|a| (a.module, a.layer, a.row)).collect();
            prop_assert_eq!(s.frames.len(), rows.len());
            prop_assert_eq!(s.cycle_ms(), rows.len() as u64 * dwell);
        }

        #[test]
        fn pin_arithmetic(rows in 1u32..500, cols in 1u32..500) {
            prop_assert_eq!(io_pin_count(rows, cols, false), rows + cols);
        }
    }
}
