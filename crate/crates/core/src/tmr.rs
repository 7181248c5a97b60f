//! Triple modular redundancy around a micro-program, voted in memory.
//!
//! Each output bit is voted independently as `NOT MIN3(x, y, z)`. Modes
//! differ in where the three copies live:
//!
//! * serial: one row, the program runs three times back to back and only the
//!   output cells are triplicated (intermediates are re-INITed and reused);
//! * parallel: three row partitions, all copies advance in the same cycle;
//! * semi-parallel: each lane occupies a group of four rows (three replicas
//!   plus a vote scratch row), copies computed row-parallel and voted
//!   in-column.

use serde::{Deserialize, Serialize};

use crate::bits::BitLine;
use crate::crossbar::{Crossbar, CrossbarError, GateKind, GateStep, Orientation};
use crate::fault::FaultInjector;
use crate::microcode::{self, ExecError, MicroOp, MicroProgram, Operand};

/// Fault-trace phase tags used by [`run_tmr`].
pub mod phase {
    pub const COPY: [u32; 3] = [0, 1, 2];
    pub const VOTE: u32 = 3;
    pub const REPLICATE: u32 = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum TmrMode {
    None,
    Serial,
    Parallel,
    SemiParallel,
}

impl TmrMode {
    pub const ALL: [TmrMode; 4] = [TmrMode::None, TmrMode::Serial, TmrMode::Parallel, TmrMode::SemiParallel];

    pub fn name(self) -> &'static str {
        match self {
            TmrMode::None => "none",
            TmrMode::Serial => "serial",
            TmrMode::Parallel => "parallel",
            TmrMode::SemiParallel => "semi",
        }
    }

    /// Rows each lane occupies.
    pub fn rows_per_lane(self) -> usize {
        match self {
            TmrMode::SemiParallel => 4,
            _ => 1,
        }
    }
}

impl std::fmt::Display for TmrMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TmrMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(TmrMode::None),
            "serial" => Ok(TmrMode::Serial),
            "parallel" => Ok(TmrMode::Parallel),
            "semi" | "semi-parallel" | "semi_parallel" => Ok(TmrMode::SemiParallel),
            other => Err(format!("unknown TMR mode {other:?} (expected none, serial, parallel or semi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord, Default)]
#[serde(rename_all = "snake_case")]
pub enum Voting {
    /// Voting gates are exposed to faults like any other gate.
    #[default]
    Min3,
    /// Voting gates never fail.
    Ideal,
}

impl Voting {
    pub fn name(self) -> &'static str {
        match self {
            Voting::Min3 => "min3",
            Voting::Ideal => "ideal",
        }
    }
}

impl std::fmt::Display for Voting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Voting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min3" => Ok(Voting::Min3),
            "ideal" => Ok(Voting::Ideal),
            other => Err(format!("unknown voting {other:?} (expected min3 or ideal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TmrPlan {
    pub mode: TmrMode,
    pub voting: Voting,
}

impl TmrPlan {
    pub fn new(mode: TmrMode, voting: Voting) -> Self {
        Self { mode, voting }
    }

    pub fn baseline() -> Self {
        Self::new(TmrMode::None, Voting::Min3)
    }

    /// Nominal latency factor relative to one program run (voting excluded).
    pub fn latency_multiplier(&self) -> f64 {
        match self.mode {
            TmrMode::Serial => 3.0,
            _ => 1.0,
        }
    }

    /// Nominal area factor relative to one program's cells (voting excluded).
    pub fn area_multiplier(&self) -> f64 {
        match self.mode {
            TmrMode::None | TmrMode::Serial => 1.0,
            TmrMode::Parallel => 3.0,
            TmrMode::SemiParallel => 4.0,
        }
    }

    /// Factor by which lanes per crossbar shrink.
    pub fn throughput_divisor(&self) -> usize {
        self.mode.rows_per_lane()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TmrError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error("{mode} TMR needs {needed} cells per row from offset {base}, crossbar side is {n}")]
    InsufficientCells { mode: TmrMode, needed: usize, base: usize, n: usize },
    #[error("semi-parallel TMR needs lane rows that are multiples of 4 with 3 spare rows below; row {0} is not")]
    BadLaneRow(usize),
    #[error("vote copies have {found:?} cells, output has {out}")]
    ShapeMismatch { found: [usize; 3], out: usize },
    #[error("program must be in-row for TMR")]
    NotInRow,
}

/// Outcome of [`run_tmr`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmrResult {
    /// Voted output word per lane (ascending lane order).
    pub outputs: Vec<u64>,
    /// Each copy's output before voting; empty for the baseline mode.
    pub copies: Vec<Vec<u64>>,
    pub output_bits: usize,
    /// Compute plus vote cycles.
    pub cycles: u64,
    pub compute_cycles: u64,
    pub vote_cycles: u64,
    /// Input placement, replication and partition setup.
    pub setup_cycles: u64,
    /// Cells used per lane, vote cells included.
    pub area_cells: usize,
}

/// Majority of three words, bit by bit.
pub fn per_bit_vote(a: u64, b: u64, c: u64) -> u64 {
    (a & b) | (a & c) | (b & c)
}

/// The word at least two copies agree on, if any.
pub fn vote_per_element_reference(a: u64, b: u64, c: u64) -> Option<u64> {
    if a == b || a == c {
        Some(a)
    } else if b == c {
        Some(b)
    } else {
        None
    }
}

/// In-row vote program: `voted[k] = NOT MIN3(copy0[k], copy1[k], copy2[k])`,
/// four ops per bit. Uses cell `scratch` and writes `out`.
pub fn build_vote(copies: [&[usize]; 3], scratch: usize, out: &[usize]) -> Result<MicroProgram, TmrError> {
    let w = out.len();
    if copies.iter().any(|c| c.len() != w) {
        return Err(TmrError::ShapeMismatch {
            found: copies.map(|c| c.len()),
            out: w,
        });
    }
    let mut ops = Vec::with_capacity(4 * w);
    for k in 0..w {
        ops.push(MicroOp::Init { cell: scratch });
        ops.push(MicroOp::Gate {
            gate: GateKind::Min3,
            inputs: vec![copies[0][k], copies[1][k], copies[2][k]],
            output: scratch,
        });
        ops.push(MicroOp::Init { cell: out[k] });
        ops.push(MicroOp::Gate {
            gate: GateKind::Not,
            inputs: vec![scratch],
            output: out[k],
        });
    }
    Ok(MicroProgram {
        name: "vote".into(),
        bit_width: w,
        orientation: Orientation::InRow,
        ops,
        inputs: (0..3).map(|i| Operand::new(format!("copy{i}"), copies[i].to_vec())).collect(),
        outputs: vec![Operand::new("voted", out.to_vec())],
    })
}

/// Vote three in-row output copies into `out` for every lane.
pub fn vote_min3(
    xbar: &mut Crossbar,
    lanes: &BitLine,
    copies: [&[usize]; 3],
    scratch: usize,
    out: &[usize],
    voting: Voting,
    faults: &mut FaultInjector,
) -> Result<Vec<u64>, TmrError> {
    let prog = build_vote(copies, scratch, out)?;
    let prev = faults.phase();
    faults.set_phase(phase::VOTE);
    faults.set_suppressed(voting == Voting::Ideal);
    let r = microcode::execute(&prog, xbar, 0, lanes, faults);
    faults.set_suppressed(false);
    faults.set_phase(prev);
    Ok(r?.outputs)
}

/// Copy `k` of a serial TMR run: output cells moved to private offsets.
fn serial_copy(prog: &MicroProgram, span: usize, k: usize) -> MicroProgram {
    if k == 0 {
        return prog.clone();
    }
    let outs = prog.output_cells();
    let bits = outs.len();
    prog.map_cells(|c| match outs.iter().position(|&o| o == c) {
        Some(pos) => span + (k - 1) * bits + pos,
        None => c,
    })
}

/// Cells per row a plan needs from the placement base.
pub fn required_span(prog: &MicroProgram, mode: TmrMode) -> usize {
    let span = prog.span();
    let bits = prog.output_bits();
    match mode {
        TmrMode::None | TmrMode::SemiParallel => span,
        TmrMode::Serial => span + 3 * bits + 1,
        TmrMode::Parallel => 3 * span + bits + 1,
    }
}

/// Load `values`, run `prog` under `plan` on `lanes`, and vote.
///
/// `values[i]` holds the operand values for the `i`-th selected lane. For
/// semi-parallel mode each selected lane row must be a multiple of four; rows
/// `+1..=+3` of each group are used for the replicas and vote scratch, and
/// column partitions every four rows are installed.
pub fn run_tmr(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
    plan: TmrPlan,
    faults: &mut FaultInjector,
) -> Result<TmrResult, TmrError> {
    if prog.orientation != Orientation::InRow {
        return Err(TmrError::NotInRow);
    }
    let needed = required_span(prog, plan.mode);
    if base + needed > xbar.n() {
        return Err(TmrError::InsufficientCells {
            mode: plan.mode,
            needed,
            base,
            n: xbar.n(),
        });
    }
    let start = xbar.cycles();
    let mark = xbar.area_mark();
    let lane_count = lanes.count_ones().max(1);
    let prev_phase = faults.phase();
    let result = match plan.mode {
        TmrMode::None => run_baseline(prog, xbar, base, lanes, values, faults),
        TmrMode::Serial => run_serial(prog, xbar, base, lanes, values, plan.voting, faults),
        TmrMode::Parallel => run_parallel(prog, xbar, base, lanes, values, plan.voting, faults),
        TmrMode::SemiParallel => run_semi(prog, xbar, base, lanes, values, plan.voting, faults),
    };
    faults.set_phase(prev_phase);
    faults.set_suppressed(false);
    let mut r = result?;
    debug_assert_eq!(xbar.cycles() - start, r.setup_cycles + r.cycles);
    r.area_cells = xbar.area_since(&mark) / lane_count;
    Ok(r)
}

fn partial(outputs: Vec<u64>, copies: Vec<Vec<u64>>, bits: usize, setup: u64, compute: u64, vote: u64) -> TmrResult {
    TmrResult {
        outputs,
        copies,
        output_bits: bits,
        cycles: compute + vote,
        compute_cycles: compute,
        vote_cycles: vote,
        setup_cycles: setup,
        area_cells: 0,
    }
}

fn run_baseline(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
    faults: &mut FaultInjector,
) -> Result<TmrResult, TmrError> {
    let t0 = xbar.cycles();
    microcode::load_inputs(prog, xbar, base, lanes, values)?;
    let setup = xbar.cycles() - t0;
    faults.set_phase(phase::COPY[0]);
    let r = microcode::execute(prog, xbar, base, lanes, faults)?;
    Ok(partial(r.outputs, Vec::new(), r.output_bits, setup, r.cycles, 0))
}

fn run_serial(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
    voting: Voting,
    faults: &mut FaultInjector,
) -> Result<TmrResult, TmrError> {
    let t0 = xbar.cycles();
    microcode::load_inputs(prog, xbar, base, lanes, values)?;
    let setup = xbar.cycles() - t0;
    let span = prog.span();
    let bits = prog.output_bits();
    let mut copies = Vec::with_capacity(3);
    let mut out_cells = Vec::with_capacity(3);
    let mut compute = 0;
    for k in 0..3 {
        let copy = serial_copy(prog, span, k);
        faults.set_phase(phase::COPY[k]);
        let r = microcode::execute(&copy, xbar, base, lanes, faults)?;
        compute += r.cycles;
        copies.push(r.outputs);
        out_cells.push(copy.output_cells().iter().map(|c| base + c).collect::<Vec<_>>());
    }
    let voted: Vec<usize> = (0..bits).map(|k| base + span + 2 * bits + k).collect();
    let scratch = base + span + 3 * bits;
    let t1 = xbar.cycles();
    let outputs = vote_min3(
        xbar,
        lanes,
        [&out_cells[0], &out_cells[1], &out_cells[2]],
        scratch,
        &voted,
        voting,
        faults,
    )?;
    Ok(partial(outputs, copies, bits, setup, compute, xbar.cycles() - t1))
}

fn run_parallel(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
    voting: Voting,
    faults: &mut FaultInjector,
) -> Result<TmrResult, TmrError> {
    let span = prog.span();
    let bits = prog.output_bits();
    let saved_cols = xbar.col_partitions().to_vec();
    let t0 = xbar.cycles();
    let mut bounds = vec![base + span, base + 2 * span];
    if base > 0 {
        bounds.insert(0, base);
    }
    xbar.set_partitions(bounds, saved_cols.clone())?;
    let copies_prog: Vec<MicroProgram> = (0..3).map(|k| prog.map_cells(|c| c + k * span)).collect();
    for copy in &copies_prog {
        microcode::load_inputs(copy, xbar, base, lanes, values)?;
        microcode::check_fit(copy, xbar, base)?;
    }
    let setup = xbar.cycles() - t0;

    let t1 = xbar.cycles();
    faults.set_phase(phase::COPY[0]);
    for op in &prog.ops {
        let steps: Vec<GateStep> = (0..3)
            .map(|k| op.to_step(Orientation::InRow, base + k * span, lanes.clone()))
            .collect();
        xbar.apply_parallel_partition_steps(&steps, faults)?;
    }
    let compute = xbar.cycles() - t1;
    let copies: Vec<Vec<u64>> = copies_prog
        .iter()
        .map(|c| microcode::read_outputs(c, xbar, base, lanes))
        .collect();

    // The vote reads across segments, so the row partitions come down first.
    let t2 = xbar.cycles();
    xbar.set_partitions(Vec::new(), saved_cols)?;
    let out_cells: Vec<Vec<usize>> = copies_prog
        .iter()
        .map(|c| c.output_cells().iter().map(|x| base + x).collect())
        .collect();
    let voted: Vec<usize> = (0..bits).map(|k| base + 3 * span + k).collect();
    let outputs = vote_min3(
        xbar,
        lanes,
        [&out_cells[0], &out_cells[1], &out_cells[2]],
        base + 3 * span + bits,
        &voted,
        voting,
        faults,
    )?;
    Ok(partial(outputs, copies, bits, setup, compute, xbar.cycles() - t2))
}

/// One in-column step per group, all groups in one cycle.
fn group_step(
    xbar: &mut Crossbar,
    groups: &[usize],
    cols: &BitLine,
    kind: Option<GateKind>,
    inputs: &[usize],
    output: usize,
    faults: &mut FaultInjector,
) -> Result<(), TmrError> {
    let steps: Vec<GateStep> = groups
        .iter()
        .map(|&g| match kind {
            None => GateStep::init(Orientation::InColumn, g + output, cols.clone()),
            Some(gate) => GateStep::gate(
                gate,
                Orientation::InColumn,
                inputs.iter().map(|&i| g + i).collect(),
                g + output,
                cols.clone(),
            ),
        })
        .collect();
    xbar.apply_parallel_partition_steps(&steps, faults)?;
    Ok(())
}

fn run_semi(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
    voting: Voting,
    faults: &mut FaultInjector,
) -> Result<TmrResult, TmrError> {
    let n = xbar.n();
    let groups: Vec<usize> = lanes.iter_ones().collect();
    if let Some(&bad) = groups.iter().find(|&&r| r % 4 != 0 || r + 3 >= n) {
        return Err(TmrError::BadLaneRow(bad));
    }
    let bits = prog.output_bits();
    let t0 = xbar.cycles();
    let col_bounds: Vec<usize> = (1..n.div_ceil(4)).map(|g| 4 * g).filter(|&b| b < n).collect();
    let row_bounds = xbar.row_partitions().to_vec();
    xbar.set_partitions(row_bounds, col_bounds)?;
    microcode::load_inputs(prog, xbar, base, lanes, values)?;
    // Replicate the inputs into rows +1 and +2 through the scratch row +3.
    let in_cols = BitLine::from_indices(n, prog.input_cells().into_iter().map(|c| base + c));
    faults.set_phase(phase::REPLICATE);
    group_step(xbar, &groups, &in_cols, None, &[], 3, faults)?;
    group_step(xbar, &groups, &in_cols, Some(GateKind::Not), &[0], 3, faults)?;
    for row in [1, 2] {
        group_step(xbar, &groups, &in_cols, None, &[], row, faults)?;
        group_step(xbar, &groups, &in_cols, Some(GateKind::Not), &[3], row, faults)?;
    }
    let setup = xbar.cycles() - t0;

    let replica_rows = |k: usize| BitLine::from_indices(n, groups.iter().map(|g| g + k));
    let all_rows = BitLine::from_indices(n, groups.iter().flat_map(|&g| [g, g + 1, g + 2]));
    faults.set_phase(phase::COPY[0]);
    let r = microcode::execute(prog, xbar, base, &all_rows, faults)?;
    let compute = r.cycles;
    let copies: Vec<Vec<u64>> = (0..3)
        .map(|k| microcode::read_outputs(prog, xbar, base, &replica_rows(k)))
        .collect();

    let t2 = xbar.cycles();
    let out_cols = BitLine::from_indices(n, prog.output_cells().into_iter().map(|c| base + c));
    faults.set_phase(phase::VOTE);
    faults.set_suppressed(voting == Voting::Ideal);
    group_step(xbar, &groups, &out_cols, None, &[], 3, faults)?;
    group_step(xbar, &groups, &out_cols, Some(GateKind::Min3), &[0, 1, 2], 3, faults)?;
    group_step(xbar, &groups, &out_cols, None, &[], 0, faults)?;
    group_step(xbar, &groups, &out_cols, Some(GateKind::Not), &[3], 0, faults)?;
    faults.set_suppressed(false);
    let vote = xbar.cycles() - t2;
    let outputs = microcode::read_outputs(prog, xbar, base, lanes);
    Ok(partial(outputs, copies, bits, setup, compute, vote))
}
