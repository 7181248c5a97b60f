//! Bit-level model of a memristive crossbar executing stateful logic.
//!
//! Cells hold one bit each (logical 1 = low resistance). A [`GateStep`] applies
//! one gate to every selected lane at once: an in-row step reads and writes
//! columns of every selected row, an in-column step reads and writes rows of
//! every selected column. Either way it costs exactly one cycle, which is the
//! parallelism contract the rest of the crate relies on.
//!
//! Partitions split rows (columns) into independent segments; gates never
//! cross a segment boundary, and steps in distinct segments may share a cycle
//! via [`Crossbar::apply_parallel_partition_steps`].
//!
//! Storage is column-major: column `c` is a [`BitLine`] over the rows, so an
//! in-row step over many rows is a handful of word operations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::{BitLine, BitMatrix};
use crate::fault::{FaultSource, NoFaults};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CrossbarError {
    #[error("crossbar side must be positive")]
    ZeroSize,
    #[error("offset {offset} out of range for crossbar of side {n}")]
    OffsetOutOfRange { offset: usize, n: usize },
    #[error("{gate} takes {expected} inputs, got {found}")]
    Arity {
        gate: GateKind,
        expected: usize,
        found: usize,
    },
    #[error("gate offsets must be distinct (duplicate {0})")]
    DuplicateOffset(usize),
    #[error("gate offsets {lo}..={hi} span a partition boundary")]
    CrossesPartition { lo: usize, hi: usize },
    #[error("lane mask has length {found}, crossbar side is {n}")]
    LaneMaskLength { found: usize, n: usize },
    #[error("partition boundaries must be strictly increasing within [1, {max}], got {found:?}")]
    BadPartitions { found: Vec<usize>, max: usize },
    #[error("steps {first} and {second} target the same partition segment")]
    SegmentConflict { first: usize, second: usize },
    #[error("parallel steps must share one orientation")]
    MixedOrientation,
    #[error("region {rect:?} out of bounds for crossbar of side {n}")]
    RegionOutOfBounds { rect: Rect, n: usize },
    #[error("data is {found_rows}x{found_cols}, region is {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
}

/// Direction a gate acts along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Gate cells are columns of one row; lanes are rows.
    InRow,
    /// Gate cells are rows of one column; lanes are columns.
    InColumn,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Orientation::InRow => "in-row",
            Orientation::InColumn => "in-column",
        }
    }

    pub fn transposed(self) -> Self {
        match self {
            Orientation::InRow => Orientation::InColumn,
            Orientation::InColumn => Orientation::InRow,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in-row" => Ok(Orientation::InRow),
            "in-column" => Ok(Orientation::InColumn),
            other => Err(format!("unknown orientation {other:?}")),
        }
    }
}

/// Stateful logic gates supported by the crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Not,
    Nor2,
    Nand2,
    Or2,
    /// Minority of three: `NOT(majority(a, b, c))`.
    Min3,
}

impl GateKind {
    pub const ALL: [GateKind; 5] = [
        GateKind::Not,
        GateKind::Nor2,
        GateKind::Nand2,
        GateKind::Or2,
        GateKind::Min3,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Not => 1,
            GateKind::Nor2 | GateKind::Nand2 | GateKind::Or2 => 2,
            GateKind::Min3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Not => "NOT",
            GateKind::Nor2 => "NOR2",
            GateKind::Nand2 => "NAND2",
            GateKind::Or2 => "OR2",
            GateKind::Min3 => "MIN3",
        }
    }

    /// Evaluate on packed words; bit `k` of the result uses bit `k` of each input.
    #[inline]
    pub fn eval_words(self, ins: &[u64]) -> u64 {
        match self {
            GateKind::Not => !ins[0],
            GateKind::Nor2 => !(ins[0] | ins[1]),
            GateKind::Nand2 => !(ins[0] & ins[1]),
            GateKind::Or2 => ins[0] | ins[1],
            GateKind::Min3 => {
                let (a, b, c) = (ins[0], ins[1], ins[2]);
                !((a & b) | (a & c) | (b & c))
            }
        }
    }

    pub fn eval(self, ins: &[bool]) -> bool {
        assert_eq!(ins.len(), self.arity(), "{self} arity");
        let words: Vec<u64> = ins.iter().map(|&b| b as u64).collect();
        self.eval_words(&words) & 1 == 1
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateKind::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown gate {s:?}"))
    }
}

/// What a step does to its output cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepKind {
    /// Pre-set the output cell to 1 (required before a MAGIC-style gate).
    Init,
    Gate(GateKind),
}

impl StepKind {
    pub fn arity(self) -> usize {
        match self {
            StepKind::Init => 0,
            StepKind::Gate(g) => g.arity(),
        }
    }
}

/// One parallel operation: a gate (or INIT) applied to every lane in `lanes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateStep {
    pub kind: StepKind,
    pub orientation: Orientation,
    /// Input cell offsets along the line (columns for in-row, rows for in-column).
    pub inputs: Vec<usize>,
    pub output: usize,
    /// Rows (in-row) or columns (in-column) the step applies to.
    pub lanes: BitLine,
}

impl GateStep {
    pub fn gate(
        gate: GateKind,
        orientation: Orientation,
        inputs: Vec<usize>,
        output: usize,
        lanes: BitLine,
    ) -> Self {
        Self {
            kind: StepKind::Gate(gate),
            orientation,
            inputs,
            output,
            lanes,
        }
    }

    pub fn init(orientation: Orientation, output: usize, lanes: BitLine) -> Self {
        Self {
            kind: StepKind::Init,
            orientation,
            inputs: Vec::new(),
            output,
            lanes,
        }
    }

    fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.inputs.iter().copied().chain(std::iter::once(self.output))
    }
}

/// Axis-aligned cell region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { row, col, rows, cols }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.rows).contains(&row) && (self.col..self.col + self.cols).contains(&col)
    }
}

/// One cell written by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellChange {
    pub row: usize,
    pub col: usize,
    pub old: bool,
    pub new: bool,
}

/// Before/after values of the line a step wrote.
///
/// For an in-row step `line` is the output column and lanes index rows; for
/// an in-column step `line` is the output row and lanes index columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepChanges {
    pub orientation: Orientation,
    pub line: usize,
    pub lanes: BitLine,
    pub old: BitLine,
    pub new: BitLine,
}

impl StepChanges {
    /// Every written cell, in ascending lane order.
    pub fn cells(&self) -> impl Iterator<Item = CellChange> + '_ {
        self.lanes.iter_ones().map(move |lane| {
            let (row, col) = match self.orientation {
                Orientation::InRow => (lane, self.line),
                Orientation::InColumn => (self.line, lane),
            };
            CellChange {
                row,
                col,
                old: self.old.get(lane),
                new: self.new.get(lane),
            }
        })
    }

    /// Lanes whose value actually changed.
    pub fn flipped(&self) -> BitLine {
        self.old.xor(&self.new).and(&self.lanes)
    }
}

/// Snapshot of the area-tracking state, see [`Crossbar::area_mark`].
#[derive(Debug, Clone)]
pub struct AreaMark(Vec<BitLine>);

/// An `n x n` memristive crossbar.
#[derive(Debug, Clone)]
pub struct Crossbar {
    n: usize,
    cols: Vec<BitLine>,
    row_partitions: Vec<usize>,
    col_partitions: Vec<usize>,
    cycles: u64,
    touched: Vec<BitLine>,
    reconfig_cycles: u64,
}

impl Crossbar {
    /// All-zero crossbar without partitions.
    pub fn new(n: usize) -> Result<Self, CrossbarError> {
        if n == 0 {
            return Err(CrossbarError::ZeroSize);
        }
        Ok(Self {
            n,
            cols: vec![BitLine::zeros(n); n],
            row_partitions: Vec::new(),
            col_partitions: Vec::new(),
            cycles: 0,
            touched: vec![BitLine::zeros(n); n],
            reconfig_cycles: 1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Cycle cost of [`Crossbar::set_partitions`] (default 1).
    pub fn set_reconfig_cycles(&mut self, cycles: u64) {
        self.reconfig_cycles = cycles;
    }

    pub fn reconfig_cycles(&self) -> u64 {
        self.reconfig_cycles
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cols[col].get(row)
    }

    /// Set a cell directly, bypassing cycle accounting (test setup, upsets).
    pub fn set_cell(&mut self, row: usize, col: usize, value: bool) {
        self.cols[col].set(row, value);
    }

    /// Flip a cell directly, bypassing cycle accounting.
    pub fn flip_cell(&mut self, row: usize, col: usize) {
        self.cols[col].toggle(row);
    }

    pub fn column(&self, col: usize) -> &BitLine {
        &self.cols[col]
    }

    /// `len <= 64` bits of row `row` starting at column `col` (bit 0 = `col`).
    pub fn row_chunk(&self, row: usize, col: usize, len: usize) -> u64 {
        (0..len).fold(0u64, |acc, j| acc | ((self.cols[col + j].get(row) as u64) << j))
    }

    pub fn row_partitions(&self) -> &[usize] {
        &self.row_partitions
    }

    pub fn col_partitions(&self) -> &[usize] {
        &self.col_partitions
    }

    /// Replace the partition configuration.
    ///
    /// `row_partitions` are column indices splitting every row into segments
    /// (they constrain in-row gates); `col_partitions` are row indices
    /// splitting every column (they constrain in-column gates). Costs
    /// [`Crossbar::reconfig_cycles`].
    pub fn set_partitions(
        &mut self,
        row_partitions: Vec<usize>,
        col_partitions: Vec<usize>,
    ) -> Result<(), CrossbarError> {
        for parts in [&row_partitions, &col_partitions] {
            let ok = parts.windows(2).all(|w| w[0] < w[1]) && parts.iter().all(|&b| b >= 1 && b < self.n);
            if !ok {
                return Err(CrossbarError::BadPartitions {
                    found: parts.clone(),
                    max: self.n - 1,
                });
            }
        }
        self.row_partitions = row_partitions;
        self.col_partitions = col_partitions;
        self.cycles += self.reconfig_cycles;
        Ok(())
    }

    fn boundaries(&self, orientation: Orientation) -> &[usize] {
        match orientation {
            Orientation::InRow => &self.row_partitions,
            Orientation::InColumn => &self.col_partitions,
        }
    }

    /// Index of the segment containing `offset` along a line of `orientation`.
    pub fn segment_of(&self, orientation: Orientation, offset: usize) -> usize {
        self.boundaries(orientation).partition_point(|&b| b <= offset)
    }

    /// Half-open range of the segment containing `offset`.
    pub fn segment_bounds(&self, orientation: Orientation, offset: usize) -> std::ops::Range<usize> {
        let b = self.boundaries(orientation);
        let seg = self.segment_of(orientation, offset);
        let start = if seg == 0 { 0 } else { b[seg - 1] };
        let end = b.get(seg).copied().unwrap_or(self.n);
        start..end
    }

    fn check_step(&self, step: &GateStep) -> Result<usize, CrossbarError> {
        if step.lanes.len() != self.n {
            return Err(CrossbarError::LaneMaskLength {
                found: step.lanes.len(),
                n: self.n,
            });
        }
        if let StepKind::Gate(gate) = step.kind {
            if step.inputs.len() != gate.arity() {
                return Err(CrossbarError::Arity {
                    gate,
                    expected: gate.arity(),
                    found: step.inputs.len(),
                });
            }
        }
        let mut seen: Vec<usize> = Vec::with_capacity(4);
        for off in step.offsets() {
            if off >= self.n {
                return Err(CrossbarError::OffsetOutOfRange { offset: off, n: self.n });
            }
            if seen.contains(&off) {
                return Err(CrossbarError::DuplicateOffset(off));
            }
            seen.push(off);
        }
        let seg = self.segment_of(step.orientation, step.output);
        if seen.iter().any(|&o| self.segment_of(step.orientation, o) != seg) {
            let lo = *seen.iter().min().unwrap();
            let hi = *seen.iter().max().unwrap();
            return Err(CrossbarError::CrossesPartition { lo, hi });
        }
        Ok(seg)
    }

    /// Apply one fault-free step (one cycle).
    pub fn apply_gate_step(&mut self, step: &GateStep) -> Result<StepChanges, CrossbarError> {
        self.apply_gate_step_with(step, &mut NoFaults)
    }

    /// Apply one step with fault injection (one cycle regardless of lane count).
    pub fn apply_gate_step_with(
        &mut self,
        step: &GateStep,
        faults: &mut dyn FaultSource,
    ) -> Result<StepChanges, CrossbarError> {
        self.check_step(step)?;
        let changes = self.apply_unchecked(step, faults);
        self.cycles += 1;
        Ok(changes)
    }

    /// Apply steps that target pairwise-distinct partition segments in one cycle.
    ///
    /// An empty list is a no-op and costs nothing.
    pub fn apply_parallel_partition_steps(
        &mut self,
        steps: &[GateStep],
        faults: &mut dyn FaultSource,
    ) -> Result<Vec<StepChanges>, CrossbarError> {
        if steps.is_empty() {
            return Ok(Vec::new());
        }
        let orientation = steps[0].orientation;
        let mut segments: Vec<(usize, usize)> = Vec::with_capacity(steps.len());
        for (i, step) in steps.iter().enumerate() {
            if step.orientation != orientation {
                return Err(CrossbarError::MixedOrientation);
            }
            let seg = self.check_step(step)?;
            if let Some(&(_, first)) = segments.iter().find(|(s, _)| *s == seg) {
                return Err(CrossbarError::SegmentConflict { first, second: i });
            }
            segments.push((seg, i));
        }
        let changes = steps.iter().map(|s| self.apply_unchecked(s, faults)).collect();
        self.cycles += 1;
        Ok(changes)
    }

    fn apply_unchecked(&mut self, step: &GateStep, faults: &mut dyn FaultSource) -> StepChanges {
        match step.orientation {
            Orientation::InRow => self.apply_in_row(step, faults),
            Orientation::InColumn => self.apply_in_column(step, faults),
        }
    }

    fn apply_in_row(&mut self, step: &GateStep, faults: &mut dyn FaultSource) -> StepChanges {
        let lanes = &step.lanes;
        let old = self.cols[step.output].clone();
        let mut write_mask = lanes.clone();
        let mut value = match step.kind {
            StepKind::Init => {
                if let Some(failed) = faults.write_faults(lanes) {
                    write_mask = write_mask.and(&failed.not());
                }
                BitLine::ones(self.n)
            }
            StepKind::Gate(gate) => {
                let mut out = BitLine::zeros(self.n);
                let mut ins = [0u64; 3];
                for (w, slot) in out.words_mut().iter_mut().enumerate() {
                    for (k, &c) in step.inputs.iter().enumerate() {
                        ins[k] = self.cols[c].words()[w];
                    }
                    *slot = gate.eval_words(&ins[..step.inputs.len()]);
                }
                out.trim();
                out
            }
        };
        if let StepKind::Gate(_) = step.kind {
            if let Some(flips) = faults.gate_faults(lanes) {
                value.xor_assign(&flips);
            }
        }
        self.cols[step.output].assign_masked(&value, &write_mask);
        for c in step.offsets() {
            self.touched[c].or_assign(lanes);
        }
        StepChanges {
            orientation: Orientation::InRow,
            line: step.output,
            lanes: lanes.clone(),
            old,
            new: self.cols[step.output].clone(),
        }
    }

    fn apply_in_column(&mut self, step: &GateStep, faults: &mut dyn FaultSource) -> StepChanges {
        let lanes = &step.lanes;
        let row_out = step.output;
        let mut old = BitLine::zeros(self.n);
        let mut value = BitLine::zeros(self.n);
        let mut ins = [false; 3];
        for col in lanes.iter_ones() {
            old.set(col, self.cols[col].get(row_out));
            let v = match step.kind {
                StepKind::Init => true,
                StepKind::Gate(gate) => {
                    for (k, &r) in step.inputs.iter().enumerate() {
                        ins[k] = self.cols[col].get(r);
                    }
                    gate.eval(&ins[..step.inputs.len()])
                }
            };
            value.set(col, v);
        }
        let mut write_mask = lanes.clone();
        match step.kind {
            StepKind::Init => {
                if let Some(failed) = faults.write_faults(lanes) {
                    write_mask = write_mask.and(&failed.not());
                }
            }
            StepKind::Gate(_) => {
                if let Some(flips) = faults.gate_faults(lanes) {
                    value.xor_assign(&flips);
                }
            }
        }
        for col in write_mask.iter_ones() {
            self.cols[col].set(row_out, value.get(col));
        }
        let mut new = old.clone();
        new.assign_masked(&value, &write_mask);
        for col in lanes.iter_ones() {
            for r in step.offsets() {
                self.touched[col].set(r, true);
            }
        }
        StepChanges {
            orientation: Orientation::InColumn,
            line: row_out,
            lanes: lanes.clone(),
            old,
            new,
        }
    }

    fn check_rect(&self, rect: Rect) -> Result<(), CrossbarError> {
        if rect.row + rect.rows > self.n || rect.col + rect.cols > self.n {
            return Err(CrossbarError::RegionOutOfBounds { rect, n: self.n });
        }
        Ok(())
    }

    /// Copy of the bits in `rect` (no cycle cost).
    pub fn read_region(&self, rect: Rect) -> Result<BitMatrix, CrossbarError> {
        self.check_rect(rect)?;
        Ok(BitMatrix::from_fn(rect.rows, rect.cols, |r, c| {
            self.get(rect.row + r, rect.col + c)
        }))
    }

    /// Row-parallel write of `bits` into `rect`: one cycle per written column.
    pub fn write_region(&mut self, rect: Rect, bits: &BitMatrix) -> Result<(), CrossbarError> {
        self.write_region_with(rect, bits, &mut NoFaults)
    }

    pub fn write_region_with(
        &mut self,
        rect: Rect,
        bits: &BitMatrix,
        faults: &mut dyn FaultSource,
    ) -> Result<(), CrossbarError> {
        self.check_rect(rect)?;
        if bits.rows() != rect.rows || bits.cols() != rect.cols {
            return Err(CrossbarError::ShapeMismatch {
                rows: rect.rows,
                cols: rect.cols,
                found_rows: bits.rows(),
                found_cols: bits.cols(),
            });
        }
        let lanes = BitLine::range(self.n, rect.row, rect.row + rect.rows);
        for c in 0..rect.cols {
            let mut value = BitLine::zeros(self.n);
            for r in 0..rect.rows {
                value.set(rect.row + r, bits.get(r, c));
            }
            self.write_column_with(rect.col + c, &lanes, &value, faults)?;
        }
        Ok(())
    }

    /// Write `values` into column `col` for the selected rows (one cycle).
    pub fn write_column_with(
        &mut self,
        col: usize,
        rows: &BitLine,
        values: &BitLine,
        faults: &mut dyn FaultSource,
    ) -> Result<(), CrossbarError> {
        if col >= self.n {
            return Err(CrossbarError::OffsetOutOfRange { offset: col, n: self.n });
        }
        if rows.len() != self.n || values.len() != self.n {
            return Err(CrossbarError::LaneMaskLength {
                found: rows.len().min(values.len()),
                n: self.n,
            });
        }
        let mut mask = rows.clone();
        if let Some(failed) = faults.write_faults(rows) {
            mask = mask.and(&failed.not());
        }
        self.cols[col].assign_masked(values, &mask);
        self.touched[col].or_assign(rows);
        self.cycles += 1;
        Ok(())
    }

    /// Write `values` into row `row` for the selected columns (one cycle).
    pub fn write_row_with(
        &mut self,
        row: usize,
        cols: &BitLine,
        values: &BitLine,
        faults: &mut dyn FaultSource,
    ) -> Result<(), CrossbarError> {
        if row >= self.n {
            return Err(CrossbarError::OffsetOutOfRange { offset: row, n: self.n });
        }
        if cols.len() != self.n || values.len() != self.n {
            return Err(CrossbarError::LaneMaskLength {
                found: cols.len().min(values.len()),
                n: self.n,
            });
        }
        let mut mask = cols.clone();
        if let Some(failed) = faults.write_faults(cols) {
            mask = mask.and(&failed.not());
        }
        for col in mask.iter_ones() {
            self.cols[col].set(row, values.get(col));
        }
        for col in cols.iter_ones() {
            self.touched[col].set(row, true);
        }
        self.cycles += 1;
        Ok(())
    }

    /// Number of distinct cells any step or write has used.
    pub fn area_cells(&self) -> usize {
        self.touched.iter().map(BitLine::count_ones).sum()
    }

    pub fn area_mark(&self) -> AreaMark {
        AreaMark(self.touched.clone())
    }

    /// Cells used since `mark` was taken that were not used before it.
    pub fn area_since(&self, mark: &AreaMark) -> usize {
        self.touched
            .iter()
            .zip(&mark.0)
            .map(|(now, then)| now.and(&then.not()).count_ones())
            .sum()
    }

    /// Whole crossbar as a row-major matrix.
    pub fn snapshot(&self) -> BitMatrix {
        BitMatrix::from_fn(self.n, self.n, |r, c| self.get(r, c))
    }

    /// Overwrite every cell from `bits` without cycle accounting.
    pub fn load(&mut self, bits: &BitMatrix) -> Result<(), CrossbarError> {
        if bits.rows() != self.n || bits.cols() != self.n {
            return Err(CrossbarError::ShapeMismatch {
                rows: self.n,
                cols: self.n,
                found_rows: bits.rows(),
                found_cols: bits.cols(),
            });
        }
        for c in 0..self.n {
            for r in 0..self.n {
                self.cols[c].set(r, bits.get(r, c));
            }
        }
        Ok(())
    }
}
