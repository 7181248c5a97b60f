//! Arithmetic functions as micro-programs of stateful gates.
//!
//! A [`MicroProgram`] is a straight-line list of INIT and gate operations over
//! symbolic cell offsets inside one line (a row for in-row programs). Placing
//! it at a base offset and running it on a lane mask evaluates the function
//! in every selected lane at once; cycle cost is the operation count,
//! independent of how many lanes are selected.
//!
//! Every gate output is preceded by an INIT of that cell, and the builders
//! recycle dead intermediate cells lowest-offset-first.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::bits::BitLine;
use crate::crossbar::{Crossbar, CrossbarError, GateKind, GateStep, Orientation, StepChanges};
use crate::fault::{FaultSource, NoFaults};

/// Widest operand or output word representable in an [`ExecutionResult`].
pub const MAX_WORD_BITS: usize = 64;

/// One micro-operation over program-relative cell offsets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MicroOp {
    Init { cell: usize },
    Gate { gate: GateKind, inputs: Vec<usize>, output: usize },
}

impl MicroOp {
    pub fn output(&self) -> usize {
        match self {
            MicroOp::Init { cell } => *cell,
            MicroOp::Gate { output, .. } => *output,
        }
    }

    pub fn inputs(&self) -> &[usize] {
        match self {
            MicroOp::Init { .. } => &[],
            MicroOp::Gate { inputs, .. } => inputs,
        }
    }

    fn map_cells(&self, f: &impl Fn(usize) -> usize) -> MicroOp {
        match self {
            MicroOp::Init { cell } => MicroOp::Init { cell: f(*cell) },
            MicroOp::Gate { gate, inputs, output } => MicroOp::Gate {
                gate: *gate,
                inputs: inputs.iter().map(|&c| f(c)).collect(),
                output: f(*output),
            },
        }
    }

    /// Crossbar step for this op placed at `base`.
    pub fn to_step(&self, orientation: Orientation, base: usize, lanes: BitLine) -> GateStep {
        match self {
            MicroOp::Init { cell } => GateStep::init(orientation, base + cell, lanes),
            MicroOp::Gate { gate, inputs, output } => GateStep::gate(
                *gate,
                orientation,
                inputs.iter().map(|&c| base + c).collect(),
                base + output,
                lanes,
            ),
        }
    }
}

/// A named multi-bit operand: `cells[k]` holds bit `k` (LSB first).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operand {
    pub name: String,
    pub cells: Vec<usize>,
}

impl Operand {
    pub fn new(name: impl Into<String>, cells: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            cells,
        }
    }
}

/// Straight-line stateful-logic program for one lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroProgram {
    pub name: String,
    pub bit_width: usize,
    pub orientation: Orientation,
    pub ops: Vec<MicroOp>,
    pub inputs: Vec<Operand>,
    pub outputs: Vec<Operand>,
}

/// Static problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    UninitializedRead { op: usize, cell: usize },
    OutputNeverWritten { operand: String, cell: usize },
    WritesInput { op: usize, cell: usize },
    Arity { op: usize, gate: GateKind, found: usize },
    RepeatedOffset { op: usize, cell: usize },
    CrossesPartition { op: usize, lo: usize, hi: usize },
    DuplicateLayoutCell { cell: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UninitializedRead { op, cell } => {
                write!(f, "op {op}: reads cell {cell} before it is initialized")
            }
            Diagnostic::OutputNeverWritten { operand, cell } => {
                write!(f, "output {operand}: cell {cell} is never written")
            }
            Diagnostic::WritesInput { op, cell } => write!(f, "op {op}: overwrites input cell {cell}"),
            Diagnostic::Arity { op, gate, found } => {
                write!(f, "op {op}: {gate} takes {} inputs, got {found}", gate.arity())
            }
            Diagnostic::RepeatedOffset { op, cell } => write!(f, "op {op}: cell {cell} used twice"),
            Diagnostic::CrossesPartition { op, lo, hi } => {
                write!(f, "op {op}: cells {lo}..={hi} span a partition boundary")
            }
            Diagnostic::DuplicateLayoutCell { cell } => {
                write!(f, "cell {cell} appears twice in the input/output layout")
            }
        }
    }
}

impl MicroProgram {
    /// Number of distinct cells the program references.
    pub fn cells_per_row(&self) -> usize {
        self.all_cells().len()
    }

    /// One past the highest referenced offset: the line width the program needs.
    pub fn span(&self) -> usize {
        self.all_cells().iter().next_back().map_or(0, |&c| c + 1)
    }

    fn all_cells(&self) -> BTreeSet<usize> {
        let mut cells = BTreeSet::new();
        for op in &self.ops {
            cells.insert(op.output());
            cells.extend(op.inputs().iter().copied());
        }
        for operand in self.inputs.iter().chain(&self.outputs) {
            cells.extend(operand.cells.iter().copied());
        }
        cells
    }

    /// Cycle cost: one per op, INITs included.
    pub fn cycles(&self) -> u64 {
        self.ops.len() as u64
    }

    pub fn gate_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, MicroOp::Gate { .. })).count()
    }

    pub fn input_cells(&self) -> Vec<usize> {
        self.inputs.iter().flat_map(|o| o.cells.iter().copied()).collect()
    }

    pub fn output_cells(&self) -> Vec<usize> {
        self.outputs.iter().flat_map(|o| o.cells.iter().copied()).collect()
    }

    pub fn output_bits(&self) -> usize {
        self.outputs.iter().map(|o| o.cells.len()).sum()
    }

    /// Copy with every cell offset remapped through `f` (must be injective).
    pub fn map_cells(&self, f: impl Fn(usize) -> usize) -> MicroProgram {
        MicroProgram {
            name: self.name.clone(),
            bit_width: self.bit_width,
            orientation: self.orientation,
            ops: self.ops.iter().map(|op| op.map_cells(&f)).collect(),
            inputs: self
                .inputs
                .iter()
                .map(|o| Operand::new(o.name.clone(), o.cells.iter().map(|&c| f(c)).collect()))
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|o| Operand::new(o.name.clone(), o.cells.iter().map(|&c| f(c)).collect()))
                .collect(),
        }
    }

    pub fn with_orientation(&self, orientation: Orientation) -> MicroProgram {
        MicroProgram {
            orientation,
            ..self.clone()
        }
    }

    /// Line-oriented text form, see [`parse_netlist`].
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let join = |cells: &[usize]| cells.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "PROGRAM {} width={}", self.name, self.bit_width);
        for o in &self.inputs {
            let _ = writeln!(out, "INPUT {} {}", o.name, join(&o.cells));
        }
        for o in &self.outputs {
            let _ = writeln!(out, "OUTPUT {} {}", o.name, join(&o.cells));
        }
        for op in &self.ops {
            let kind = match op {
                MicroOp::Init { .. } => "INIT",
                MicroOp::Gate { gate, .. } => gate.name(),
            };
            let _ = writeln!(
                out,
                "STEP {kind} {} in={} out={}",
                self.orientation,
                join(op.inputs()),
                op.output()
            );
        }
        out
    }
}

/// Static checks: arity, repeated offsets, reads of uninitialized cells,
/// writes to input cells and output cells that are never written.
pub fn validate(prog: &MicroProgram) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let inputs: HashSet<usize> = prog.input_cells().into_iter().collect();
    let mut layout_seen = HashSet::new();
    for cell in prog.input_cells().into_iter().chain(prog.output_cells()) {
        if !layout_seen.insert(cell) {
            diags.push(Diagnostic::DuplicateLayoutCell { cell });
        }
    }
    let mut ready: HashSet<usize> = inputs.clone();
    let mut written: HashSet<usize> = HashSet::new();
    for (i, op) in prog.ops.iter().enumerate() {
        if let MicroOp::Gate { gate, inputs: ins, output } = op {
            if ins.len() != gate.arity() {
                diags.push(Diagnostic::Arity {
                    op: i,
                    gate: *gate,
                    found: ins.len(),
                });
            }
            let mut seen = HashSet::new();
            for &c in ins.iter().chain(std::iter::once(output)) {
                if !seen.insert(c) {
                    diags.push(Diagnostic::RepeatedOffset { op: i, cell: c });
                }
            }
            for &c in ins {
                if !ready.contains(&c) {
                    diags.push(Diagnostic::UninitializedRead { op: i, cell: c });
                }
            }
        }
        let out = op.output();
        if inputs.contains(&out) {
            diags.push(Diagnostic::WritesInput { op: i, cell: out });
        }
        ready.insert(out);
        written.insert(out);
    }
    for o in &prog.outputs {
        for &c in &o.cells {
            if !written.contains(&c) && !inputs.contains(&c) {
                diags.push(Diagnostic::OutputNeverWritten {
                    operand: o.name.clone(),
                    cell: c,
                });
            }
        }
    }
    diags
}

/// [`validate`] plus a check that no op straddles one of `boundaries`
/// (absolute line offsets) when the program is placed at `base`.
pub fn validate_placed(prog: &MicroProgram, base: usize, boundaries: &[usize]) -> Vec<Diagnostic> {
    let mut diags = validate(prog);
    let segment = |off: usize| boundaries.partition_point(|&b| b <= off);
    for (i, op) in prog.ops.iter().enumerate() {
        let cells: Vec<usize> = op.inputs().iter().copied().chain(std::iter::once(op.output())).collect();
        let seg = segment(base + op.output());
        if cells.iter().any(|&c| segment(base + c) != seg) {
            diags.push(Diagnostic::CrossesPartition {
                op: i,
                lo: base + cells.iter().min().unwrap(),
                hi: base + cells.iter().max().unwrap(),
            });
        }
    }
    diags
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error("invalid program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("program needs cells {base}..{end} but the line has {n}")]
    DoesNotFit { base: usize, end: usize, n: usize },
    #[error("program {what} is {bits} bits wide; at most 64 are supported")]
    TooWide { what: &'static str, bits: usize },
    #[error("expected {expected} operand values per lane, got {found}")]
    OperandCount { expected: usize, found: usize },
    #[error("expected {expected} lanes of input values, got {found}")]
    LaneCount { expected: usize, found: usize },
}

/// Result of running a program over a set of lanes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    /// One output word per selected lane, ascending lane order. Output
    /// operands are concatenated LSB-first in declaration order.
    pub outputs: Vec<u64>,
    pub output_bits: usize,
    pub cycles: u64,
    /// Cells used per lane.
    pub area_cells: usize,
}

fn check_widths(prog: &MicroProgram) -> Result<(), ExecError> {
    if prog.output_bits() > MAX_WORD_BITS {
        return Err(ExecError::TooWide {
            what: "output",
            bits: prog.output_bits(),
        });
    }
    if let Some(o) = prog.inputs.iter().find(|o| o.cells.len() > MAX_WORD_BITS) {
        return Err(ExecError::TooWide {
            what: "input operand",
            bits: o.cells.len(),
        });
    }
    Ok(())
}

/// Check that `prog` placed at `base` fits one partition segment of `xbar`.
pub fn check_fit(prog: &MicroProgram, xbar: &Crossbar, base: usize) -> Result<(), ExecError> {
    let end = base + prog.span();
    if end > xbar.n() {
        return Err(ExecError::DoesNotFit {
            base,
            end,
            n: xbar.n(),
        });
    }
    let boundaries = match prog.orientation {
        Orientation::InRow => xbar.row_partitions(),
        Orientation::InColumn => xbar.col_partitions(),
    };
    let diags = validate_placed(prog, base, boundaries);
    if !diags.is_empty() {
        return Err(ExecError::Invalid(diags));
    }
    check_widths(prog)
}

fn cell_value(xbar: &Crossbar, orientation: Orientation, cell: usize, lane: usize) -> bool {
    match orientation {
        Orientation::InRow => xbar.get(lane, cell),
        Orientation::InColumn => xbar.get(cell, lane),
    }
}

/// Host-side write of operand values: `values[i][k]` is operand `k` for the
/// `i`-th selected lane. Costs one cycle per input cell (line-parallel write).
pub fn load_inputs(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    values: &[Vec<u64>],
) -> Result<(), ExecError> {
    check_widths(prog)?;
    let lane_ids: Vec<usize> = lanes.iter_ones().collect();
    if values.len() != lane_ids.len() {
        return Err(ExecError::LaneCount {
            expected: lane_ids.len(),
            found: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| v.len() != prog.inputs.len()) {
        return Err(ExecError::OperandCount {
            expected: prog.inputs.len(),
            found: v.len(),
        });
    }
    if base + prog.span() > xbar.n() {
        return Err(ExecError::DoesNotFit {
            base,
            end: base + prog.span(),
            n: xbar.n(),
        });
    }
    for (k, operand) in prog.inputs.iter().enumerate() {
        for (bit, &cell) in operand.cells.iter().enumerate() {
            let mut line = BitLine::zeros(xbar.n());
            for (i, &lane) in lane_ids.iter().enumerate() {
                line.set(lane, (values[i][k] >> bit) & 1 == 1);
            }
            match prog.orientation {
                Orientation::InRow => xbar.write_column_with(base + cell, lanes, &line, &mut NoFaults)?,
                Orientation::InColumn => xbar.write_row_with(base + cell, lanes, &line, &mut NoFaults)?,
            }
        }
    }
    Ok(())
}

/// Output words currently held by the program's output cells.
pub fn read_outputs(prog: &MicroProgram, xbar: &Crossbar, base: usize, lanes: &BitLine) -> Vec<u64> {
    let cells = prog.output_cells();
    lanes
        .iter_ones()
        .map(|lane| {
            cells.iter().enumerate().fold(0u64, |acc, (bit, &cell)| {
                acc | ((cell_value(xbar, prog.orientation, base + cell, lane) as u64) << bit)
            })
        })
        .collect()
}

/// Run `prog` placed at `base` on every lane in `lanes`.
pub fn execute(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    faults: &mut dyn FaultSource,
) -> Result<ExecutionResult, ExecError> {
    execute_observed(prog, xbar, base, lanes, faults, &mut |_, _| {})
}

/// [`execute`] reporting the cells each op wrote to `observer(op_index, changes)`.
pub fn execute_observed(
    prog: &MicroProgram,
    xbar: &mut Crossbar,
    base: usize,
    lanes: &BitLine,
    faults: &mut dyn FaultSource,
    observer: &mut dyn FnMut(usize, &StepChanges),
) -> Result<ExecutionResult, ExecError> {
    check_fit(prog, xbar, base)?;
    if lanes.len() != xbar.n() {
        return Err(CrossbarError::LaneMaskLength {
            found: lanes.len(),
            n: xbar.n(),
        }
        .into());
    }
    let start = xbar.cycles();
    let mark = xbar.area_mark();
    for (i, op) in prog.ops.iter().enumerate() {
        let step = op.to_step(prog.orientation, base, lanes.clone());
        let changes = xbar.apply_gate_step_with(&step, faults)?;
        observer(i, &changes);
    }
    let lane_count = lanes.count_ones().max(1);
    Ok(ExecutionResult {
        outputs: read_outputs(prog, xbar, base, lanes),
        output_bits: prog.output_bits(),
        cycles: xbar.cycles() - start,
        area_cells: xbar.area_since(&mark) / lane_count,
    })
}

/// Incremental program construction with lowest-first cell recycling.
#[derive(Debug)]
pub(crate) struct NetlistBuilder {
    ops: Vec<MicroOp>,
    next: usize,
    free: BTreeSet<usize>,
}

impl NetlistBuilder {
    pub(crate) fn new(first_free: usize) -> Self {
        Self {
            ops: Vec::new(),
            next: first_free,
            free: BTreeSet::new(),
        }
    }

    pub(crate) fn alloc(&mut self) -> usize {
        if let Some(c) = self.free.pop_first() {
            return c;
        }
        self.next += 1;
        self.next - 1
    }

    pub(crate) fn release(&mut self, cell: usize) {
        self.free.insert(cell);
    }

    pub(crate) fn init(&mut self) -> usize {
        let cell = self.alloc();
        self.ops.push(MicroOp::Init { cell });
        cell
    }

    pub(crate) fn gate(&mut self, gate: GateKind, inputs: &[usize]) -> usize {
        let output = self.alloc();
        self.ops.push(MicroOp::Init { cell: output });
        self.ops.push(MicroOp::Gate {
            gate,
            inputs: inputs.to_vec(),
            output,
        });
        output
    }

    /// `(sum, carry)` of `x + y + c` using five gates:
    /// `carry = NOT MIN3(x,y,c)`, `sum = MIN3(carry, NOT c, MIN3(x, y, NOT c))`.
    pub(crate) fn full_adder(&mut self, x: usize, y: usize, c: usize) -> (usize, usize) {
        let minority = self.gate(GateKind::Min3, &[x, y, c]);
        let carry = self.gate(GateKind::Not, &[minority]);
        self.release(minority);
        let not_c = self.gate(GateKind::Not, &[c]);
        let m2 = self.gate(GateKind::Min3, &[x, y, not_c]);
        let sum = self.gate(GateKind::Min3, &[carry, not_c, m2]);
        self.release(not_c);
        self.release(m2);
        (sum, carry)
    }

    pub(crate) fn finish(
        self,
        name: &str,
        bit_width: usize,
        inputs: Vec<Operand>,
        outputs: Vec<Operand>,
    ) -> MicroProgram {
        MicroProgram {
            name: name.to_string(),
            bit_width,
            orientation: Orientation::InRow,
            ops: self.ops,
            inputs,
            outputs,
        }
    }
}

/// One-bit full adder. Inputs `a`, `b`, `cin` at cells 0..3; outputs `sum`
/// then `carry`, so the output word equals `a + b + cin`.
pub fn build_full_adder() -> MicroProgram {
    let mut b = NetlistBuilder::new(3);
    let (sum, carry) = b.full_adder(0, 1, 2);
    b.finish(
        "full_adder",
        1,
        vec![
            Operand::new("a", vec![0]),
            Operand::new("b", vec![1]),
            Operand::new("cin", vec![2]),
        ],
        vec![Operand::new("sum", vec![sum]), Operand::new("carry", vec![carry])],
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("bit width must be at least 1")]
    ZeroWidth,
    #[error("bit width {0} exceeds 32 (product must fit a 64-bit word)")]
    TooWide(usize),
}

/// Unsigned `bit_width x bit_width -> 2*bit_width` shift-and-add multiplier
/// within one row.
///
/// Inputs `a` (cells `0..w`) and `b` (cells `w..2w`). Partial products are
/// `AND(a_i, b_j) = NOR(NOT a_i, NOT b_j)`; each partial-product row is added
/// into the running product with a ripple of full adders.
pub fn build_multiplier(bit_width: usize) -> Result<MicroProgram, BuildError> {
    let w = bit_width;
    if w == 0 {
        return Err(BuildError::ZeroWidth);
    }
    if w > 32 {
        return Err(BuildError::TooWide(w));
    }
    let a: Vec<usize> = (0..w).collect();
    let bv: Vec<usize> = (w..2 * w).collect();
    let mut b = NetlistBuilder::new(2 * w);
    let not_a: Vec<usize> = a.iter().map(|&c| b.gate(GateKind::Not, &[c])).collect();
    let not_b: Vec<usize> = bv.iter().map(|&c| b.gate(GateKind::Not, &[c])).collect();
    let one = b.init();
    let zero = b.gate(GateKind::Not, &[one]);
    b.release(one);

    let mut product: Vec<usize> = (0..w).map(|i| b.gate(GateKind::Nor2, &[not_a[i], not_b[0]])).collect();
    product.push(zero);
    for j in 1..w {
        let mut carry = zero;
        for i in 0..w {
            let pp = b.gate(GateKind::Nor2, &[not_a[i], not_b[j]]);
            let acc = product[j + i];
            let (sum, carry_out) = b.full_adder(acc, pp, carry);
            b.release(pp);
            if acc != zero {
                b.release(acc);
            }
            if carry != zero {
                b.release(carry);
            }
            product[j + i] = sum;
            carry = carry_out;
        }
        product.push(carry);
    }
    debug_assert_eq!(product.len(), 2 * w);
    Ok(b.finish(
        &format!("mult{w}"),
        w,
        vec![Operand::new("a", a), Operand::new("b", bv)],
        vec![Operand::new("p", product)],
    ))
}

/// Error from [`parse_netlist`], with a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct NetlistParseError {
    pub line: usize,
    pub message: String,
}

/// Upper bound on offsets accepted from text, so a hostile netlist cannot
/// request an absurd line width.
pub const MAX_TEXT_OFFSET: usize = 1 << 20;

/// Parse the text produced by [`MicroProgram::to_text`].
///
/// ```text
/// PROGRAM <name> width=<w>
/// INPUT <name> <cell>,<cell>,...
/// OUTPUT <name> <cell>,...
/// STEP <INIT|NOT|NOR2|NAND2|OR2|MIN3> <in-row|in-column> in=<cells> out=<cell>
/// ```
///
/// `#` starts a comment line. All STEP lines must share one orientation.
pub fn parse_netlist(text: &str) -> Result<MicroProgram, NetlistParseError> {
    let mut header: Option<(String, usize)> = None;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut ops = Vec::new();
    let mut orientation: Option<Orientation> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| NetlistParseError { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "PROGRAM" => {
                if header.is_some() {
                    return Err(err("duplicate PROGRAM line".into()));
                }
                let [_, name, width] = fields[..] else {
                    return Err(err("expected `PROGRAM <name> width=<w>`".into()));
                };
                let width = key_value(width, "width")
                    .and_then(parse_offset)
                    .map_err(err)?;
                header = Some((name.to_string(), width));
            }
            kw @ ("INPUT" | "OUTPUT") => {
                let [_, name, cells] = fields[..] else {
                    return Err(err(format!("expected `{kw} <name> <cells>`")));
                };
                let cells = parse_list(cells).map_err(err)?;
                if cells.is_empty() || cells.len() > MAX_WORD_BITS {
                    return Err(err(format!("operand must have 1..={MAX_WORD_BITS} cells")));
                }
                let operand = Operand::new(name, cells);
                if kw == "INPUT" {
                    inputs.push(operand);
                } else {
                    outputs.push(operand);
                }
            }
            "STEP" => {
                let [_, kind, orient, ins, out] = fields[..] else {
                    return Err(err("expected `STEP <gate> <orientation> in=<cells> out=<cell>`".into()));
                };
                let orient: Orientation = orient.parse().map_err(err)?;
                match orientation {
                    None => orientation = Some(orient),
                    Some(o) if o != orient => return Err(err("mixed step orientations".into())),
                    _ => {}
                }
                let ins = parse_list(key_value(ins, "in").map_err(err)?).map_err(err)?;
                let output = key_value(out, "out").and_then(parse_offset).map_err(err)?;
                let op = if kind == "INIT" {
                    if !ins.is_empty() {
                        return Err(err("INIT takes no inputs".into()));
                    }
                    MicroOp::Init { cell: output }
                } else {
                    let gate: GateKind = kind.parse().map_err(err)?;
                    if ins.len() != gate.arity() {
                        return Err(err(format!("{gate} takes {} inputs, got {}", gate.arity(), ins.len())));
                    }
                    MicroOp::Gate {
                        gate,
                        inputs: ins,
                        output,
                    }
                };
                ops.push(op);
            }
            other => return Err(err(format!("unknown directive {other:?}"))),
        }
    }
    let (name, bit_width) = header.ok_or(NetlistParseError {
        line: 0,
        message: "missing PROGRAM line".into(),
    })?;
    Ok(MicroProgram {
        name,
        bit_width,
        orientation: orientation.unwrap_or(Orientation::InRow),
        ops,
        inputs,
        outputs,
    })
}

fn key_value<'a>(field: &'a str, key: &str) -> Result<&'a str, String> {
    field
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| format!("expected `{key}=...`, got {field:?}"))
}

fn parse_offset(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    if v > MAX_TEXT_OFFSET {
        return Err(format!("offset {v} exceeds {MAX_TEXT_OFFSET}"));
    }
    Ok(v)
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_offset).collect()
}
