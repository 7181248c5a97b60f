//! Parity-based error correction for crossbar data.
//!
//! Two schemes over an `n x n` crossbar:
//!
//! * [`ParityBanks`]: per `m x m` block, parity along wrap-around leading
//!   diagonals (index `(col - row) mod m`), counter diagonals (index
//!   `(col + row) mod m`) and, optionally, rows. Any in-row or in-column step
//!   touches each diagonal of a block at most once, so the banks update with
//!   a constant number of shifted XORs regardless of `n`.
//! * [`NaiveParity`]: one parity bit per horizontal group of bits in a row.
//!   Cheap for in-row steps, but an in-column step changes one bit in every
//!   group of the row and the updates serialize.
//!
//! Bank contents are kept as `m`-bit words; the barrel-shifter alignment is
//! realized as cyclic rotations and priced by [`EccCostModel`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::BitLine;
use crate::crossbar::{CellChange, Crossbar, Orientation, Rect, StepChanges};
use crate::fault::{FaultInjector, FaultSource};
use crate::microcode::{self, ExecError, ExecutionResult, MicroProgram};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EccError {
    #[error("block side must be in 2..=64, got {0}")]
    BadBlockSide(usize),
    #[error("block side {m} does not divide crossbar side {n}")]
    NotDivisible { n: usize, m: usize },
    #[error("group size must be in 1..=n, got {0}")]
    BadGroup(usize),
    #[error("crossbar side {found} does not match geometry side {expected}")]
    SideMismatch { expected: usize, found: usize },
    #[error("change list mixes rows and columns")]
    MixedChanges,
    #[error("change at ({row}, {col}) is outside the crossbar")]
    ChangeOutOfRange { row: usize, col: usize },
    #[error("uncorrectable input data in {} block(s)", .0.uncorrectable().len())]
    Uncorrectable(EccReport),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Partition of an `n x n` crossbar into `m x m` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGeometry {
    pub n: usize,
    pub m: usize,
}

impl BlockGeometry {
    pub fn new(n: usize, m: usize) -> Result<Self, EccError> {
        if !(2..=64).contains(&m) {
            return Err(EccError::BadBlockSide(m));
        }
        if !n.is_multiple_of(m) {
            return Err(EccError::NotDivisible { n, m });
        }
        Ok(Self { n, m })
    }

    /// Blocks per side.
    pub fn blocks_per_side(&self) -> usize {
        self.n / self.m
    }

    fn index(&self, block_row: usize, block_col: usize) -> usize {
        block_row * self.blocks_per_side() + block_col
    }

    fn mask(&self) -> u64 {
        low_mask(self.m)
    }
}

fn low_mask(m: usize) -> u64 {
    if m == 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

fn rotl(x: u64, k: usize, m: usize) -> u64 {
    let k = k % m;
    if k == 0 {
        return x;
    }
    ((x << k) | (x >> (m - k))) & low_mask(m)
}

fn rotr(x: u64, k: usize, m: usize) -> u64 {
    rotl(x, m - k % m, m)
}

fn reverse(x: u64, m: usize) -> u64 {
    x.reverse_bits() >> (64 - m)
}

/// Number of parity banks per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum BankMode {
    /// Leading and counter diagonals only. Single flips are ambiguous for even `m`.
    Two,
    /// Diagonals plus per-row parity; every single flip decodes uniquely.
    #[default]
    Three,
}

impl BankMode {
    pub fn count(self) -> u64 {
        match self {
            BankMode::Two => 2,
            BankMode::Three => 3,
        }
    }
}

impl std::str::FromStr for BankMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "2" => Ok(BankMode::Two),
            "3" => Ok(BankMode::Three),
            other => Err(format!("bank count must be 2 or 3, got {other:?}")),
        }
    }
}

/// Cycle prices for parity maintenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccCostModel {
    /// One barrel-shifter alignment of a bank line.
    pub shift_cycles: u64,
    /// One line-parallel XOR: four NOR gates, each preceded by an INIT.
    pub xor_cycles: u64,
    /// Copying the old output line to scratch before a destructive write.
    pub snapshot_cycles: u64,
}

impl Default for EccCostModel {
    fn default() -> Self {
        Self {
            shift_cycles: 1,
            xor_cycles: 8,
            snapshot_cycles: 2,
        }
    }
}

impl EccCostModel {
    /// Diagonal-scheme cost of absorbing one step. Independent of `n` and of
    /// how many lanes the step covered.
    pub fn diagonal_update_cycles(&self, orientation: Orientation, m: usize, banks: BankMode) -> u64 {
        let per_bank = self.shift_cycles + self.xor_cycles;
        let base = self.snapshot_cycles + self.xor_cycles;
        match (orientation, banks) {
            (Orientation::InRow, b) => base + b.count() * per_bank,
            (Orientation::InColumn, BankMode::Two) => base + 2 * per_bank,
            // The row bank needs the parity of the m-bit delta: a log-depth
            // shift/XOR reduction, then one XOR into the bank.
            (Orientation::InColumn, BankMode::Three) => {
                let depth = (m as u64).next_power_of_two().trailing_zeros() as u64;
                base + 2 * per_bank + depth * per_bank + self.xor_cycles
            }
        }
    }

    /// Naive-scheme cost of absorbing one step that wrote `lanes` cells.
    pub fn naive_update_cycles(&self, orientation: Orientation, lanes: usize) -> u64 {
        let single = self.snapshot_cycles + 2 * self.xor_cycles;
        match orientation {
            Orientation::InRow => single,
            Orientation::InColumn => lanes as u64 * single,
        }
    }

    /// Recomputing a block's banks for verification: `m` shifted XORs per
    /// bank, all blocks in parallel.
    pub fn verify_cycles(&self, m: usize, banks: BankMode) -> u64 {
        m as u64 * banks.count() * (self.shift_cycles + self.xor_cycles)
    }
}

/// Parity words of one block; bit `d` of `leading` covers diagonal `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockParity {
    pub leading: u64,
    pub counter: u64,
    pub row_aux: u64,
}

impl BlockParity {
    fn xor(&self, other: &BlockParity) -> BlockParity {
        BlockParity {
            leading: self.leading ^ other.leading,
            counter: self.counter ^ other.counter,
            row_aux: self.row_aux ^ other.row_aux,
        }
    }
}

/// Which parity bank a check bit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bank {
    Leading,
    Counter,
    RowAux,
}

/// Failing check-bit indices per bank of one block (bit set = mismatch).
pub type Syndrome = BlockParity;

/// Decoder verdict for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BlockOutcome {
    Clean,
    /// A data bit was flipped back at this absolute position.
    Corrected { row: usize, col: usize },
    /// A single check bit was wrong and has been rewritten.
    CheckBitRepaired { bank: Bank, index: usize },
    /// Two-bank syndrome consistent with several single flips; nothing changed.
    Ambiguous { candidates: Vec<(usize, usize)> },
    Uncorrectable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block_row: usize,
    pub block_col: usize,
    pub syndrome: Syndrome,
    pub outcome: BlockOutcome,
}

/// Result of [`ParityBanks::verify_and_correct`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EccReport {
    pub blocks: Vec<BlockReport>,
    pub cycles: u64,
}

impl EccReport {
    pub fn is_clean(&self) -> bool {
        self.blocks.iter().all(|b| b.outcome == BlockOutcome::Clean)
    }

    /// True when every block ended consistent (clean, corrected or repaired).
    pub fn is_ok(&self) -> bool {
        self.uncorrectable().is_empty()
    }

    pub fn corrected(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .filter_map(|b| match b.outcome {
                BlockOutcome::Corrected { row, col } => Some((row, col)),
                _ => None,
            })
            .collect()
    }

    /// Blocks left inconsistent: uncorrectable or ambiguous.
    pub fn uncorrectable(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .filter(|b| matches!(b.outcome, BlockOutcome::Uncorrectable | BlockOutcome::Ambiguous { .. }))
            .map(|b| (b.block_row, b.block_col))
            .collect()
    }
}

impl fmt::Display for EccReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            if b.outcome != BlockOutcome::Clean {
                writeln!(f, "block ({}, {}): {:?}", b.block_row, b.block_col, b.outcome)?;
            }
        }
        Ok(())
    }
}

/// Diagonal parity banks for every block of a crossbar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityBanks {
    geom: BlockGeometry,
    mode: BankMode,
    blocks: Vec<BlockParity>,
}

impl ParityBanks {
    /// Banks computed directly from the cell definition.
    pub fn encode(xbar: &Crossbar, geom: BlockGeometry, mode: BankMode) -> Result<Self, EccError> {
        if xbar.n() != geom.n {
            return Err(EccError::SideMismatch {
                expected: geom.n,
                found: xbar.n(),
            });
        }
        let k = geom.blocks_per_side();
        let mut banks = Self {
            geom,
            mode,
            blocks: vec![BlockParity::default(); k * k],
        };
        for br in 0..k {
            for bc in 0..k {
                let idx = geom.index(br, bc);
                banks.blocks[idx] = banks.compute_block(xbar, br, bc);
            }
        }
        Ok(banks)
    }

    fn compute_block(&self, xbar: &Crossbar, br: usize, bc: usize) -> BlockParity {
        let m = self.geom.m;
        let mut p = BlockParity::default();
        for j in 0..m {
            let col = xbar.column(bc * m + j);
            for i in 0..m {
                if col.get(br * m + i) {
                    p.leading ^= 1 << ((j + m - i) % m);
                    p.counter ^= 1 << ((j + i) % m);
                    p.row_aux ^= 1 << i;
                }
            }
        }
        if self.mode == BankMode::Two {
            p.row_aux = 0;
        }
        p
    }

    pub fn geometry(&self) -> BlockGeometry {
        self.geom
    }

    pub fn mode(&self) -> BankMode {
        self.mode
    }

    pub fn block(&self, block_row: usize, block_col: usize) -> BlockParity {
        self.blocks[self.geom.index(block_row, block_col)]
    }

    /// Flip one stored check bit (fault injection on the banks).
    pub fn flip_check_bit(&mut self, block_row: usize, block_col: usize, bank: Bank, index: usize) {
        let idx = self.geom.index(block_row, block_col);
        let b = &mut self.blocks[idx];
        let word = match bank {
            Bank::Leading => &mut b.leading,
            Bank::Counter => &mut b.counter,
            Bank::RowAux => &mut b.row_aux,
        };
        *word ^= 1 << index;
    }

    /// Absorb one executed step. Returns the cycle cost under `cost`.
    pub fn update_step(&mut self, changes: &StepChanges, cost: &EccCostModel) -> u64 {
        self.apply_delta(changes.orientation, changes.line, &changes.flipped(), None);
        cost.diagonal_update_cycles(changes.orientation, self.geom.m, self.mode)
    }

    /// [`ParityBanks::update_step`] with the bank-side XORs simulated gate by
    /// gate under `faults`.
    pub fn update_step_faulty(
        &mut self,
        changes: &StepChanges,
        cost: &EccCostModel,
        faults: &mut FaultInjector,
    ) -> u64 {
        self.apply_delta(changes.orientation, changes.line, &changes.flipped(), Some(faults));
        cost.diagonal_update_cycles(changes.orientation, self.geom.m, self.mode)
    }

    /// Absorb a list of cell changes that all lie in one column (in-row step)
    /// or one row (in-column step).
    pub fn update_incremental(&mut self, changes: &[CellChange], cost: &EccCostModel) -> Result<u64, EccError> {
        let Some((orientation, line, delta)) = delta_line(changes, self.geom.n)? else {
            return Ok(0);
        };
        self.apply_delta(orientation, line, &delta, None);
        Ok(cost.diagonal_update_cycles(orientation, self.geom.m, self.mode))
    }

    fn apply_delta(&mut self, orientation: Orientation, line: usize, delta: &BitLine, mut faults: Option<&mut FaultInjector>) {
        let m = self.geom.m;
        let k = self.geom.blocks_per_side();
        let three = self.mode == BankMode::Three;
        for b in 0..k {
            let d = delta.chunk(b * m, m);
            if d == 0 && faults.is_none() {
                continue;
            }
            let (idx, update) = match orientation {
                Orientation::InRow => {
                    let j = line % m;
                    let update = BlockParity {
                        leading: rotl(reverse(d, m), j + 1, m),
                        counter: rotl(d, j, m),
                        row_aux: if three { d } else { 0 },
                    };
                    (self.geom.index(b, line / m), update)
                }
                Orientation::InColumn => {
                    let i = line % m;
                    let update = BlockParity {
                        leading: rotr(d, i, m),
                        counter: rotl(d, i, m),
                        row_aux: if three { ((d.count_ones() & 1) as u64) << i } else { 0 },
                    };
                    (self.geom.index(line / m, b), update)
                }
            };
            let block = &mut self.blocks[idx];
            match faults.as_deref_mut() {
                None => *block = block.xor(&update),
                Some(inj) => {
                    let aux_lines = match orientation {
                        Orientation::InRow => self.geom.mask(),
                        Orientation::InColumn => 1 << (line % m),
                    };
                    block.leading = faulty_xor_word(inj, block.leading, update.leading, self.geom.mask());
                    block.counter = faulty_xor_word(inj, block.counter, update.counter, self.geom.mask());
                    if three {
                        block.row_aux = faulty_xor_word(inj, block.row_aux, update.row_aux, aux_lines);
                    }
                }
            }
        }
    }

    /// Check every block overlapping `region`, fixing single data flips in
    /// place and rewriting single wrong check bits.
    pub fn verify_and_correct(&mut self, xbar: &mut Crossbar, region: Rect, cost: &EccCostModel) -> EccReport {
        let m = self.geom.m;
        let k = self.geom.blocks_per_side();
        let mut report = EccReport::default();
        if region.rows == 0 || region.cols == 0 {
            return report;
        }
        let rows = region.row / m..((region.row + region.rows).div_ceil(m)).min(k);
        let cols = region.col / m..((region.col + region.cols).div_ceil(m)).min(k);
        for br in rows {
            for bc in cols.clone() {
                report.blocks.push(self.verify_block(xbar, br, bc));
            }
        }
        report.cycles = cost.verify_cycles(m, self.mode);
        report
    }

    /// Verify the given blocks only.
    pub fn verify_blocks(
        &mut self,
        xbar: &mut Crossbar,
        blocks: impl IntoIterator<Item = (usize, usize)>,
        cost: &EccCostModel,
    ) -> EccReport {
        let mut report = EccReport::default();
        for (br, bc) in blocks {
            report.blocks.push(self.verify_block(xbar, br, bc));
        }
        if !report.blocks.is_empty() {
            report.cycles = cost.verify_cycles(self.geom.m, self.mode);
        }
        report
    }

    fn verify_block(&mut self, xbar: &mut Crossbar, br: usize, bc: usize) -> BlockReport {
        let m = self.geom.m;
        let idx = self.geom.index(br, bc);
        let syndrome = self.blocks[idx].xor(&self.compute_block(xbar, br, bc));
        let counts = (
            syndrome.leading.count_ones(),
            syndrome.counter.count_ones(),
            syndrome.row_aux.count_ones(),
        );
        let at = |w: u64| w.trailing_zeros() as usize;
        let outcome = match (self.mode, counts) {
            (_, (0, 0, 0)) => BlockOutcome::Clean,
            (BankMode::Three, (1, 1, 1)) => {
                let (d, s, i) = (at(syndrome.leading), at(syndrome.counter), at(syndrome.row_aux));
                let j = (d + i) % m;
                if (j + i) % m == s {
                    let (row, col) = (br * m + i, bc * m + j);
                    xbar.flip_cell(row, col);
                    BlockOutcome::Corrected { row, col }
                } else {
                    BlockOutcome::Uncorrectable
                }
            }
            (BankMode::Two, (1, 1, 0)) => {
                let (d, s) = (at(syndrome.leading), at(syndrome.counter));
                // j - i = d and j + i = s (mod m): 2i = s - d.
                let cands: Vec<(usize, usize)> = (0..m)
                    .filter(|&i| (2 * i) % m == (s + m - d) % m)
                    .map(|i| (br * m + i, bc * m + (d + i) % m))
                    .collect();
                match cands.as_slice() {
                    [] => BlockOutcome::Uncorrectable,
                    [(row, col)] => {
                        xbar.flip_cell(*row, *col);
                        BlockOutcome::Corrected { row: *row, col: *col }
                    }
                    _ => BlockOutcome::Ambiguous { candidates: cands },
                }
            }
            (_, (1, 0, 0)) => self.repair(idx, Bank::Leading, at(syndrome.leading)),
            (_, (0, 1, 0)) => self.repair(idx, Bank::Counter, at(syndrome.counter)),
            (BankMode::Three, (0, 0, 1)) => self.repair(idx, Bank::RowAux, at(syndrome.row_aux)),
            _ => BlockOutcome::Uncorrectable,
        };
        BlockReport {
            block_row: br,
            block_col: bc,
            syndrome,
            outcome,
        }
    }

    fn repair(&mut self, idx: usize, bank: Bank, index: usize) -> BlockOutcome {
        let b = &mut self.blocks[idx];
        match bank {
            Bank::Leading => b.leading ^= 1 << index,
            Bank::Counter => b.counter ^= 1 << index,
            Bank::RowAux => b.row_aux ^= 1 << index,
        }
        BlockOutcome::CheckBitRepaired { bank, index }
    }
}

/// XNOR from four NOR gates, each output exposed to gate faults.
fn faulty_xnor(inj: &mut FaultInjector, a: bool, b: bool) -> bool {
    let t = inj.maybe_corrupt_gate(!(a | b));
    let u = inj.maybe_corrupt_gate(!(a | t));
    let v = inj.maybe_corrupt_gate(!(b | t));
    inj.maybe_corrupt_gate(!(u | v))
}

/// `bank ^ delta` on the bits of `lines`, realized as
/// `XNOR(bank, XNOR-encoded delta)` with faulty gates.
fn faulty_xor_word(inj: &mut FaultInjector, bank: u64, delta: u64, lines: u64) -> u64 {
    let mut out = bank;
    for bit in 0..64 {
        if lines >> bit & 1 == 0 {
            continue;
        }
        let a = bank >> bit & 1 == 1;
        let e = delta >> bit & 1 == 0;
        let r = faulty_xnor(inj, a, e);
        out = (out & !(1 << bit)) | ((r as u64) << bit);
    }
    out
}

fn delta_line(changes: &[CellChange], n: usize) -> Result<Option<(Orientation, usize, BitLine)>, EccError> {
    let Some(first) = changes.first() else {
        return Ok(None);
    };
    if let Some(c) = changes.iter().find(|c| c.row >= n || c.col >= n) {
        return Err(EccError::ChangeOutOfRange { row: c.row, col: c.col });
    }
    let same_col = changes.iter().all(|c| c.col == first.col);
    let same_row = changes.iter().all(|c| c.row == first.row);
    let orientation = if same_col {
        Orientation::InRow
    } else if same_row {
        Orientation::InColumn
    } else {
        return Err(EccError::MixedChanges);
    };
    let mut delta = BitLine::zeros(n);
    for c in changes {
        let lane = match orientation {
            Orientation::InRow => c.row,
            Orientation::InColumn => c.col,
        };
        if c.old != c.new {
            delta.toggle(lane);
        }
    }
    let line = match orientation {
        Orientation::InRow => first.col,
        Orientation::InColumn => first.row,
    };
    Ok(Some((orientation, line, delta)))
}

/// Horizontal parity: one bit per `group` consecutive cells of each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveParity {
    n: usize,
    group: usize,
    /// `parity[g]` holds the parity of group `g` for every row.
    parity: Vec<BitLine>,
}

impl NaiveParity {
    pub const DEFAULT_GROUP: usize = 8;

    pub fn encode(xbar: &Crossbar, group: usize) -> Result<Self, EccError> {
        let n = xbar.n();
        if group == 0 || group > n {
            return Err(EccError::BadGroup(group));
        }
        let mut parity = vec![BitLine::zeros(n); n.div_ceil(group)];
        for c in 0..n {
            parity[c / group].xor_assign(xbar.column(c));
        }
        Ok(Self { n, group, parity })
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn parity_bit(&self, row: usize, group: usize) -> bool {
        self.parity[group].get(row)
    }

    /// Absorb one executed step; returns its cycle cost.
    pub fn update_step(&mut self, changes: &StepChanges, cost: &EccCostModel) -> u64 {
        let flipped = changes.flipped();
        match changes.orientation {
            Orientation::InRow => self.parity[changes.line / self.group].xor_assign(&flipped),
            Orientation::InColumn => {
                for col in flipped.iter_ones() {
                    self.parity[col / self.group].toggle(changes.line);
                }
            }
        }
        cost.naive_update_cycles(changes.orientation, changes.lanes.count_ones())
    }

    /// Cell-list variant; the cost counts every listed cell as written.
    pub fn update_incremental(&mut self, changes: &[CellChange], cost: &EccCostModel) -> Result<u64, EccError> {
        let Some((orientation, line, delta)) = delta_line(changes, self.n)? else {
            return Ok(0);
        };
        let lanes = BitLine::from_indices(
            self.n,
            changes.iter().map(|c| match orientation {
                Orientation::InRow => c.row,
                Orientation::InColumn => c.col,
            }),
        );
        let sc = StepChanges {
            orientation,
            line,
            old: BitLine::zeros(self.n),
            new: delta,
            lanes,
        };
        Ok(self.update_step(&sc, cost))
    }

    /// `(row, group)` pairs whose parity disagrees with the data. Detection only.
    pub fn mismatches(&self, xbar: &Crossbar) -> Vec<(usize, usize)> {
        let fresh = Self::encode(xbar, self.group).expect("group validated at construction");
        let mut out = Vec::new();
        for (g, (a, b)) in self.parity.iter().zip(&fresh.parity).enumerate() {
            for row in a.xor(b).iter_ones() {
                out.push((row, g));
            }
        }
        out.sort_unstable();
        out
    }
}

/// Outcome of [`wrap_function_with_ecc`].
#[derive(Debug, Clone, PartialEq)]
pub struct EccRun {
    pub exec: ExecutionResult,
    pub verify: EccReport,
    /// Parity-maintenance cycles for all steps plus input verification.
    pub ecc_cycles: u64,
}

impl EccRun {
    pub fn total_cycles(&self) -> u64 {
        self.exec.cycles + self.ecc_cycles
    }

    /// ECC cycles per program cycle.
    pub fn overhead_ratio(&self) -> f64 {
        self.ecc_cycles as f64 / self.exec.cycles.max(1) as f64
    }
}

/// Blocks holding any input cell of `prog` placed at `base` in `lanes`.
pub fn input_blocks(prog: &MicroProgram, geom: BlockGeometry, base: usize, lanes: &BitLine) -> Vec<(usize, usize)> {
    let m = geom.m;
    let mut blocks = std::collections::BTreeSet::new();
    let cells = prog.input_cells();
    for lane in lanes.iter_ones() {
        for &c in &cells {
            let (row, col) = match prog.orientation {
                Orientation::InRow => (lane, base + c),
                Orientation::InColumn => (base + c, lane),
            };
            if row < geom.n && col < geom.n {
                blocks.insert((row / m, col / m));
            }
        }
    }
    blocks.into_iter().collect()
}

/// Verify input blocks, run `prog`, and fold every step into `banks`.
///
/// An uncorrectable or ambiguous input block aborts before execution.
pub fn wrap_function_with_ecc(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    banks: &mut ParityBanks,
    cost: &EccCostModel,
    faults: &mut dyn FaultSource,
) -> Result<EccRun, EccError> {
    let blocks = input_blocks(prog, banks.geometry(), base, lanes);
    let verify = banks.verify_blocks(xbar, blocks, cost);
    if !verify.is_ok() {
        return Err(EccError::Uncorrectable(verify));
    }
    let mut update_cycles = 0;
    let exec = microcode::execute_observed(prog, xbar, base, lanes, faults, &mut |_, changes| {
        update_cycles += banks.update_step(changes, cost);
    })?;
    Ok(EccRun {
        exec,
        ecc_cycles: verify.cycles + update_cycles,
        verify,
    })
}
