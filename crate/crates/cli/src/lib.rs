//! Command-line front end: option merging, experiment dispatch and output.
//!
//! Values come from flags, then the `--config` TOML file, then built-in
//! defaults. Everything is validated before any simulation starts. Exit codes
//! are [`EXIT_OK`], [`EXIT_CONFIG`] and [`EXIT_ABORT`].

pub mod args;
pub mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use mpim_core::analytics::{
    self, clamp_underflow, nn_failure_probability, weight_degradation, EccKind, EccResidualModel, McConfig,
    NnModelParams, SweepConfig,
};
use mpim_core::bits::{BitLine, BitMatrix};
use mpim_core::crossbar::{Crossbar, GateKind, GateStep, Orientation, Rect};
use mpim_core::ecc::{self, BankMode, BlockGeometry, EccCostModel, EccError, NaiveParity, ParityBanks};
use mpim_core::fault::{derive_seed, FaultConfig, FaultInjector, NoFaults, RNG_ALGORITHM};
use mpim_core::microcode::{self, build_full_adder, build_multiplier, parse_netlist, MicroProgram};
use mpim_core::report::{
    write_csv, write_json, CsvRow, DegradationRow, EccBlockRow, EccCostRow, EccRunRow, GateRow, McRow, MultRow,
    NnRow, ReportMeta,
};
use mpim_core::tmr::{required_span, run_tmr, TmrMode, TmrPlan, Voting};

use args::{Cli, Command, EccCommand, EccGeometryArgs, Format};
use config::{Count, FileConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
/// Uncorrectable data found by ECC verification.
pub const EXIT_ABORT: i32 = 2;

/// Overrides the directory output goes to when `--out` is not given.
pub const OUT_DIR_ENV: &str = "MPIM_OUT_DIR";

const TOOL: &str = "mpim";
const STREAM_DATA: u64 = 3;
const STREAM_FLIPS: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Output was written, but ECC reported data it could not correct.
    Aborted(String),
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Status::Done) => EXIT_OK,
        Ok(Status::Aborted(msg)) => {
            eprintln!("error: {msg}");
            EXIT_ABORT
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Settings shared by every experiment.
struct Ctx {
    format: Format,
    out: Option<PathBuf>,
    jobs: usize,
    seed: u64,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn pick_list<T>(flag: Vec<T>, file: Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.unwrap_or(default)
    }
}

fn count<T: TryFrom<u64>>(key: &str, c: Option<Count>) -> Result<Option<T>, CliError> {
    c.map(|Count(v)| T::try_from(v).map_err(|_| CliError::Config(format!("{key}: {v} is too large"))))
        .transpose()
}

fn parse_key<T: FromStr>(key: &str, s: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn check_probability(key: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key}: {v} is not a probability in [0, 1]")))
    }
}

fn check_positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key}: {v} must be positive")))
    }
}

fn check_range(key: &str, v: usize, lo: usize, hi: usize) -> Result<usize, CliError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{key}: {v} is outside {lo}..={hi}")))
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config: cannot read {}: {e}", path.display())))?;
    Ok(config::parse_config(&text)?)
}

fn read_text(key: &str, path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{key}: cannot read {}: {e}", path.display())))
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<Status, CliError> {
    let file = load_config(cli.config.as_deref())?;
    let ctx = Ctx {
        format: pick(cli.format, file.format, Format::Csv),
        out: cli.out.or(file.out.clone()),
        jobs: pick(cli.jobs, count("jobs", file.jobs)?, 0),
        seed: pick(cli.seed, file.seed.map(|c| c.0), 0),
    };
    match cli.command {
        Command::Gates => gates(&ctx),
        Command::Mult(a) => mult(&ctx, a, file.mult.unwrap_or_default()),
        Command::Ecc(EccCommand::Verify(a)) => ecc_verify(&ctx, a, file.ecc.unwrap_or_default()),
        Command::Ecc(EccCommand::Inject(a)) => ecc_inject(&ctx, a, file.ecc.unwrap_or_default()),
        Command::Ecc(EccCommand::Overhead(a)) => ecc_overhead(&ctx, a, file.ecc.unwrap_or_default()),
        Command::TmrSweep(a) => tmr_sweep(&ctx, a, file.tmr_sweep.unwrap_or_default()),
        Command::Nn(a) => nn(&ctx, a, file.nn.unwrap_or_default()),
        Command::Degradation(a) => degradation(&ctx, a, file.degradation.unwrap_or_default()),
        Command::DumpNetlist(a) => dump_netlist(&ctx, a, file.dump_netlist.unwrap_or_default()),
    }
}

/// First 16 hex digits of SHA-256 over the canonical JSON of the resolved
/// experiment settings. Output-only settings (format, path, jobs) are excluded.
pub fn config_hash<T: Serialize>(experiment: &str, seed: u64, resolved: &T) -> String {
    let json = serde_json::to_string(&(experiment, seed, resolved)).expect("serializable config");
    hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
}

fn destination(ctx: &Ctx, experiment: &str, ext: &str) -> Option<PathBuf> {
    ctx.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(format!("{experiment}.{ext}")))
    })
}

fn with_output(
    ctx: &Ctx,
    experiment: &str,
    ext: &str,
    f: impl FnOnce(&mut dyn Write) -> Result<(), mpim_core::report::ReportError>,
) -> Result<(), CliError> {
    let io_err = |e: &dyn std::fmt::Display| CliError::Io(format!("output: {e}"));
    match destination(ctx, experiment, ext) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(&e))?;
            }
            let mut w = io::BufWriter::new(fs::File::create(&path).map_err(|e| io_err(&e))?);
            f(&mut w).map_err(|e| io_err(&e))?;
            w.flush().map_err(|e| io_err(&e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).map_err(|e| io_err(&e))?;
            w.flush().map_err(|e| io_err(&e))
        }
    }
}

fn emit<R: CsvRow, C: Serialize>(ctx: &Ctx, experiment: &str, resolved: &C, rows: &[R]) -> Result<(), CliError> {
    let meta = ReportMeta {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: experiment.into(),
        seed: ctx.seed,
        config_hash: config_hash(experiment, ctx.seed, resolved),
        rng: RNG_ALGORITHM.into(),
    };
    let format = ctx.format;
    with_output(ctx, experiment, format.extension(), |w| match format {
        Format::Csv => write_csv(w, &meta, rows),
        Format::Json => write_json(w, &meta, rows),
    })
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn gates(ctx: &Ctx) -> Result<Status, CliError> {
    let mut rows = Vec::new();
    for gate in GateKind::ALL {
        let k = gate.arity();
        let combos = 1usize << k;
        let mut xbar = Crossbar::new(8).map_err(run_err)?;
        for row in 0..combos {
            for bit in 0..k {
                xbar.set_cell(row, bit, (row >> (k - 1 - bit)) & 1 == 1);
            }
        }
        let lanes = BitLine::range(8, 0, combos);
        xbar.apply_gate_step(&GateStep::init(Orientation::InRow, k, lanes.clone())).map_err(run_err)?;
        xbar.apply_gate_step(&GateStep::gate(gate, Orientation::InRow, (0..k).collect(), k, lanes))
            .map_err(run_err)?;
        for row in 0..combos {
            rows.push(GateRow {
                experiment: "gates".into(),
                gate: gate.name().into(),
                inputs: (0..k).map(|b| if xbar.get(row, b) { '1' } else { '0' }).collect(),
                output: xbar.get(row, k) as u8,
            });
        }
    }
    emit(ctx, "gates", &(), &rows)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct MultResolved {
    bits: usize,
    a: Option<u64>,
    b: Option<u64>,
    trials: u64,
    p_gate: f64,
    plan: TmrPlan,
    netlist: Option<String>,
    batch_lanes: usize,
}

fn check_multiplier(prog: &MicroProgram, bits: usize) -> Result<(), CliError> {
    let diags = microcode::validate(prog);
    if let Some(d) = diags.first() {
        return Err(CliError::Config(format!("mult.netlist: {d}")));
    }
    let shape_ok = prog.inputs.len() == 2
        && prog.inputs.iter().all(|op| op.cells.len() == bits)
        && prog.output_bits() == 2 * bits
        && prog.orientation == Orientation::InRow;
    if !shape_ok {
        return Err(CliError::Config(format!(
            "mult.netlist: expected an in-row program with two {bits}-bit inputs and a {}-bit output",
            2 * bits
        )));
    }
    Ok(())
}

fn mult(ctx: &Ctx, a: args::MultArgs, f: config::MultSection) -> Result<Status, CliError> {
    let bits = check_range("mult.bits", pick(a.bits, count("mult.bits", f.bits)?, 8), 1, 32)?;
    let netlist_path = a.netlist.or(f.netlist);
    let (prog, netlist_text) = match &netlist_path {
        Some(path) => {
            let text = read_text("mult.netlist", path)?;
            let prog = parse_netlist(&text).map_err(|e| CliError::Config(format!("mult.netlist: {e}")))?;
            check_multiplier(&prog, bits)?;
            (prog, Some(text))
        }
        None => (build_multiplier(bits).map_err(run_err)?, None),
    };
    if a.dump_netlist {
        let text = prog.to_text();
        with_output(ctx, "netlist", "txt", |w| Ok(w.write_all(text.as_bytes())?))?;
        return Ok(Status::Done);
    }
    let mode: TmrMode = parse_key("mult.tmr", &pick(a.tmr, f.tmr, "none".into()))?;
    let voting: Voting = parse_key("mult.voting", &pick(a.voting, f.voting, "min3".into()))?;
    let resolved = MultResolved {
        bits,
        a: a.a.or(f.a.map(|c| c.0)),
        b: a.b.or(f.b.map(|c| c.0)),
        trials: pick(a.trials, f.trials.map(|c| c.0), 1000),
        p_gate: check_probability("mult.p_gate", pick(a.p_gate, f.p_gate, 0.0))?,
        plan: TmrPlan::new(mode, voting),
        netlist: netlist_text,
        batch_lanes: pick(a.batch_lanes, count("mult.batch_lanes", f.batch_lanes)?, McConfig::DEFAULT_BATCH_LANES),
    };
    if resolved.batch_lanes == 0 {
        return Err(CliError::Config("mult.batch_lanes: must be at least 1".into()));
    }
    let mask = (1u64 << bits) - 1;
    match (resolved.a, resolved.b) {
        (Some(x), Some(y)) => {
            for (key, v) in [("mult.a", x), ("mult.b", y)] {
                if v > mask {
                    return Err(CliError::Config(format!("{key}: {v} does not fit in {bits} bits")));
                }
            }
            let n = required_span(&prog, mode).max(mode.rows_per_lane());
            let mut xbar = Crossbar::new(n).map_err(run_err)?;
            let lanes = BitLine::from_indices(n, [0]);
            let cfg = FaultConfig::gate_faults(resolved.p_gate, ctx.seed);
            let mut faults = FaultInjector::with_stream(cfg, derive_seed(ctx.seed, 2, 0));
            let r = run_tmr(&prog, &mut xbar, 0, &lanes, &[vec![x, y]], resolved.plan, &mut faults)
                .map_err(run_err)?;
            let row = MultRow {
                experiment: "mult".into(),
                mode: mode.name().into(),
                voting: if mode == TmrMode::None { "none" } else { voting.name() }.into(),
                bit_width: bits,
                a: x,
                b: y,
                product: r.outputs[0],
                expected: x * y,
                correct: r.outputs[0] == x * y,
                cycles: r.cycles,
                area_cells: r.area_cells,
                seed: ctx.seed,
            };
            emit(ctx, "mult", &resolved, &[row])?;
        }
        (None, None) => {
            if resolved.trials == 0 {
                return Err(CliError::Config("mult.trials: must be at least 1".into()));
            }
            let mut mc = McConfig::new(bits, resolved.p_gate, resolved.trials, resolved.plan, ctx.seed);
            mc.batch_lanes = resolved.batch_lanes;
            let r = analytics::with_jobs(ctx.jobs, || analytics::estimate_p_mult_with(&prog, &mc))
                .and_then(|r| r)
                .map_err(run_err)?;
            emit(ctx, "mult", &resolved, &[McRow::from_result("mult", &r)])?;
        }
        _ => return Err(CliError::Config("mult: --a and --b must be given together".into())),
    }
    Ok(Status::Done)
}

#[derive(Serialize)]
struct EccGeometry {
    n: usize,
    m: usize,
    banks: u64,
}

fn resolve_geometry(
    g: &EccGeometryArgs,
    f: &config::EccSection,
    default_n: usize,
) -> Result<(EccGeometry, BlockGeometry, BankMode), CliError> {
    let n = pick(g.n, count("ecc.n", f.n)?, default_n);
    let m = pick(g.m, count("ecc.m", f.m)?, 16);
    let banks_s = pick(g.banks.clone(), f.banks.map(|c| c.0.to_string()), "3".into());
    let mode: BankMode = parse_key("ecc.banks", &banks_s)?;
    let geom = BlockGeometry::new(n, m).map_err(|e| CliError::Config(format!("ecc: {e}")))?;
    Ok((EccGeometry { n, m, banks: mode.count() }, geom, mode))
}

fn parse_flips(list: &[String], n: usize) -> Result<Vec<(usize, usize)>, CliError> {
    list.iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let bad = || CliError::Config(format!("ecc.flips: `{s}` is not `row:col` inside a {n}x{n} crossbar"));
            let (r, c) = s.trim().split_once(':').ok_or_else(bad)?;
            let r: usize = r.trim().parse().map_err(|_| bad())?;
            let c: usize = c.trim().parse().map_err(|_| bad())?;
            if r < n && c < n {
                Ok((r, c))
            } else {
                Err(bad())
            }
        })
        .collect()
}

#[derive(Serialize)]
struct EccVerifyResolved {
    geometry: EccGeometry,
    data: Option<String>,
    flips: Vec<(usize, usize)>,
    random_flips: usize,
}

fn ecc_verify(ctx: &Ctx, a: args::EccVerifyArgs, f: config::EccSection) -> Result<Status, CliError> {
    let data_path = a.data.or(f.data.clone());
    let data = match &data_path {
        Some(path) => {
            let bm = BitMatrix::parse_text(&read_text("ecc.data", path)?)
                .map_err(|e| CliError::Config(format!("ecc.data: {e}")))?;
            if bm.rows() != bm.cols() {
                return Err(CliError::Config(format!("ecc.data: matrix is {}x{}, expected square", bm.rows(), bm.cols())));
            }
            Some(bm)
        }
        None => None,
    };
    let default_n = data.as_ref().map_or(64, |d| d.rows());
    let (g, geom, mode) = resolve_geometry(&a.geometry, &f, default_n)?;
    if data.as_ref().is_some_and(|d| d.rows() != g.n) {
        return Err(CliError::Config(format!("ecc.n: {} does not match the data side {}", g.n, default_n)));
    }
    let resolved = EccVerifyResolved {
        flips: parse_flips(&pick_list(a.flips, f.flips, Vec::new()), g.n)?,
        random_flips: check_range("ecc.random_flips", pick(a.random_flips, count("ecc.random_flips", f.random_flips)?, 0), 0, g.n * g.n)?,
        data: data.as_ref().map(|d| d.to_text()),
        geometry: g,
    };
    let n = resolved.geometry.n;
    let mut xbar = Crossbar::new(n).map_err(run_err)?;
    let contents = match data {
        Some(d) => d,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, STREAM_DATA, 0));
            BitMatrix::from_fn(n, n, |_, _| rng.random_bool(0.5))
        }
    };
    xbar.load(&contents).map_err(run_err)?;
    let mut banks = ParityBanks::encode(&xbar, geom, mode).map_err(run_err)?;
    for &(r, c) in &resolved.flips {
        xbar.flip_cell(r, c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, STREAM_FLIPS, 0));
    for i in sample(&mut rng, n * n, resolved.random_flips) {
        xbar.flip_cell(i / n, i % n);
    }
    let report = banks.verify_and_correct(&mut xbar, Rect::new(0, 0, n, n), &EccCostModel::default());
    let rows: Vec<EccBlockRow> = report
        .blocks
        .iter()
        .filter(|b| b.outcome != ecc::BlockOutcome::Clean)
        .map(|b| EccBlockRow::from_report("ecc-verify", b))
        .collect();
    emit(ctx, "ecc-verify", &resolved, &rows)?;
    if report.is_ok() {
        Ok(Status::Done)
    } else {
        Ok(Status::Aborted(format!("{} block(s) could not be corrected", report.uncorrectable().len())))
    }
}

#[derive(Serialize)]
struct EccInjectResolved {
    geometry: EccGeometry,
    bits: usize,
    lanes: usize,
    flips: Vec<(usize, usize)>,
    random_flips: usize,
}

fn ecc_inject(ctx: &Ctx, a: args::EccInjectArgs, f: config::EccSection) -> Result<Status, CliError> {
    let (g, geom, mode) = resolve_geometry(&a.geometry, &f, 64)?;
    let bits = check_range("ecc.bits", pick(a.bits, count("ecc.bits", f.bits)?, 8), 1, 32)?;
    let prog = build_multiplier(bits).map_err(run_err)?;
    if prog.span() > g.n {
        return Err(CliError::Config(format!(
            "ecc.n: a {bits}-bit multiplier needs {} cells per row, crossbar has {}",
            prog.span(),
            g.n
        )));
    }
    let lanes_n = check_range("ecc.lanes", pick(a.lanes, count("ecc.lanes", f.lanes)?, g.n), 1, g.n)?;
    let lanes = BitLine::range(g.n, 0, lanes_n);
    let input_cells: Vec<(usize, usize)> =
        (0..lanes_n).flat_map(|r| prog.input_cells().into_iter().map(move |c| (r, c))).collect();
    let resolved = EccInjectResolved {
        flips: parse_flips(&pick_list(a.flips, f.flips.clone(), Vec::new()), g.n)?,
        random_flips: check_range(
            "ecc.random_flips",
            pick(a.random_flips, count("ecc.random_flips", f.random_flips)?, 0),
            0,
            input_cells.len(),
        )?,
        geometry: g,
        bits,
        lanes: lanes_n,
    };
    let n = resolved.geometry.n;
    let mut xbar = Crossbar::new(n).map_err(run_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, 1, 0));
    let mask = (1u64 << bits) - 1;
    let values: Vec<Vec<u64>> =
        (0..lanes_n).map(|_| vec![rng.random::<u64>() & mask, rng.random::<u64>() & mask]).collect();
    microcode::load_inputs(&prog, &mut xbar, 0, &lanes, &values).map_err(run_err)?;
    let mut banks = ParityBanks::encode(&xbar, geom, mode).map_err(run_err)?;
    let mut flip_rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, STREAM_FLIPS, 0));
    let mut flips = resolved.flips.clone();
    flips.extend(sample(&mut flip_rng, input_cells.len(), resolved.random_flips).into_iter().map(|i| input_cells[i]));
    for &(r, c) in &flips {
        xbar.flip_cell(r, c);
    }
    let cost = EccCostModel::default();
    let mut row = EccRunRow {
        experiment: "ecc-inject".into(),
        bit_width: bits,
        lanes: lanes_n,
        flips: flips.len(),
        corrected: 0,
        uncorrectable: 0,
        aborted: false,
        correct_outputs: 0,
        program_cycles: 0,
        ecc_cycles: 0,
        overhead_ratio: 0.0,
        seed: ctx.seed,
    };
    let status = match ecc::wrap_function_with_ecc(&prog, &mut xbar, 0, &lanes, &mut banks, &cost, &mut NoFaults) {
        Ok(run) => {
            row.corrected = run.verify.corrected().len();
            row.correct_outputs = run.exec.outputs.iter().zip(&values).filter(|(&o, v)| o == v[0] * v[1]).count();
            row.program_cycles = run.exec.cycles;
            row.ecc_cycles = run.ecc_cycles;
            row.overhead_ratio = run.overhead_ratio();
            Status::Done
        }
        Err(EccError::Uncorrectable(report)) => {
            row.corrected = report.corrected().len();
            row.uncorrectable = report.uncorrectable().len();
            row.aborted = true;
            row.ecc_cycles = report.cycles;
            Status::Aborted(format!("{} input block(s) could not be corrected; function not run", row.uncorrectable))
        }
        Err(e) => return Err(run_err(e)),
    };
    emit(ctx, "ecc-inject", &resolved, &[row])?;
    Ok(status)
}

#[derive(Serialize)]
struct EccOverheadResolved {
    sizes: Vec<usize>,
    m: usize,
    banks: u64,
    naive_group: usize,
}

fn ecc_overhead(ctx: &Ctx, a: args::EccOverheadArgs, f: config::EccSection) -> Result<Status, CliError> {
    let file_sizes = f.sizes.clone().map(|v| v.into_iter().map(|c| c.0 as usize).collect());
    let geometry_args = EccGeometryArgs {
        n: None,
        m: a.m,
        banks: a.banks,
    };
    let sizes = pick_list(a.n, file_sizes, vec![16, 32, 64]);
    let mut plan = Vec::new();
    for &n in &sizes {
        let g = EccGeometryArgs {
            n: Some(n),
            ..geometry_args.clone()
        };
        plan.push(resolve_geometry(&g, &f, n)?);
    }
    let (m, banks) = plan.first().map_or((16, 3), |p| (p.0.m, p.0.banks));
    let resolved = EccOverheadResolved {
        sizes,
        m,
        banks,
        naive_group: NaiveParity::DEFAULT_GROUP,
    };
    let cost = EccCostModel::default();
    let mut rows = Vec::new();
    for (g, geom, mode) in plan {
        for orientation in [Orientation::InRow, Orientation::InColumn] {
            let mut xbar = Crossbar::new(g.n).map_err(run_err)?;
            let mut diag = ParityBanks::encode(&xbar, geom, mode).map_err(run_err)?;
            let mut naive =
                NaiveParity::encode(&xbar, NaiveParity::DEFAULT_GROUP.min(g.n)).map_err(run_err)?;
            let changes = xbar
                .apply_gate_step(&GateStep::init(orientation, 0, BitLine::ones(g.n)))
                .map_err(run_err)?;
            rows.push(EccCostRow {
                experiment: "ecc-overhead".into(),
                orientation: orientation.name().into(),
                n: g.n,
                m: g.m,
                banks: g.banks,
                diagonal_cycles: diag.update_step(&changes, &cost),
                naive_cycles: naive.update_step(&changes, &cost),
            });
        }
    }
    emit(ctx, "ecc-overhead", &resolved, &rows)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct TmrSweepResolved {
    bits: usize,
    p_gate: Vec<f64>,
    plans: Vec<TmrPlan>,
    trials: u64,
    batch_lanes: usize,
}

/// Expand modes x voting into plans; `none` appears once whatever the voting list.
pub fn sweep_plans(modes: &[TmrMode], voting: &[Voting]) -> Vec<TmrPlan> {
    let mut plans = Vec::new();
    for &mode in modes {
        let here: Vec<TmrPlan> = if mode == TmrMode::None {
            vec![TmrPlan::baseline()]
        } else {
            voting.iter().map(|&v| TmrPlan::new(mode, v)).collect()
        };
        for p in here {
            if !plans.contains(&p) {
                plans.push(p);
            }
        }
    }
    plans
}

fn tmr_sweep(ctx: &Ctx, a: args::TmrSweepArgs, f: config::TmrSweepSection) -> Result<Status, CliError> {
    let bits = check_range("tmr_sweep.bits", pick(a.bits, count("tmr_sweep.bits", f.bits)?, 8), 1, 32)?;
    let p_gate = pick_list(a.p_gate, f.p_gate, vec![1e-3, 3e-4, 1e-4]);
    for &p in &p_gate {
        check_probability("tmr_sweep.p_gate", p)?;
    }
    let default_modes = TmrMode::ALL.iter().map(|m| m.name().to_string()).collect();
    let modes = pick_list(a.modes, f.modes, default_modes)
        .iter()
        .map(|s| parse_key("tmr_sweep.modes", s))
        .collect::<Result<Vec<TmrMode>, _>>()?;
    let voting = pick_list(a.voting, f.voting, vec!["min3".into()])
        .iter()
        .map(|s| parse_key("tmr_sweep.voting", s))
        .collect::<Result<Vec<Voting>, _>>()?;
    let trials = pick(a.trials, f.trials.map(|c| c.0), 10_000);
    if trials == 0 {
        return Err(CliError::Config("tmr_sweep.trials: must be at least 1".into()));
    }
    let batch_lanes = pick(a.batch_lanes, count("tmr_sweep.batch_lanes", f.batch_lanes)?, McConfig::DEFAULT_BATCH_LANES);
    if batch_lanes == 0 {
        return Err(CliError::Config("tmr_sweep.batch_lanes: must be at least 1".into()));
    }
    let resolved = TmrSweepResolved {
        bits,
        plans: sweep_plans(&modes, &voting),
        p_gate,
        trials,
        batch_lanes,
    };
    let cfg = SweepConfig {
        bit_width: bits,
        p_gates: resolved.p_gate.clone(),
        plans: resolved.plans.clone(),
        trials,
        seed: ctx.seed,
        batch_lanes,
    };
    let results = analytics::with_jobs(ctx.jobs, || analytics::sweep(&cfg))
        .and_then(|r| r)
        .map_err(run_err)?;
    let rows: Vec<McRow> = results.iter().map(|r| McRow::from_result("tmr-sweep", r)).collect();
    emit(ctx, "tmr-sweep", &resolved, &rows)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct NnResolved {
    p_mult: Vec<f64>,
    p_mask: f64,
    m_mults: f64,
}

fn nn(ctx: &Ctx, a: args::NnArgs, f: config::NnSection) -> Result<Status, CliError> {
    let defaults = NnModelParams::default();
    let resolved = NnResolved {
        p_mult: pick_list(a.p_mult, f.p_mult, (4..=10).rev().map(|k| 10f64.powi(-k)).collect()),
        p_mask: check_probability("nn.p_mask", pick(a.p_mask, f.p_mask, defaults.p_mask))?,
        m_mults: check_positive("nn.M", pick(a.m_mults, f.m_mults, defaults.m_mults))?,
    };
    for &p in &resolved.p_mult {
        check_probability("nn.p_mult", p)?;
    }
    let params = NnModelParams {
        p_mask: resolved.p_mask,
        m_mults: resolved.m_mults,
        ..defaults
    };
    let rows: Vec<NnRow> = resolved
        .p_mult
        .iter()
        .map(|&p| {
            let (p_net, clamped) = clamp_underflow(nn_failure_probability(&params, p));
            NnRow {
                experiment: "nn".into(),
                p_mult: p,
                p_mask: params.p_mask,
                m_mults: params.m_mults,
                p_net,
                union_bound: (params.m_mults * params.p_mask * p).min(1.0),
                clamped,
            }
        })
        .collect();
    emit(ctx, "nn", &resolved, &rows)?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct DegradationResolved {
    p_input: Vec<f64>,
    t_batches: Vec<f64>,
    ecc: Vec<EccKind>,
    w_weights: f64,
    model: EccResidualModel,
    bits: u32,
    m: u32,
}

fn degradation(ctx: &Ctx, a: args::DegradationArgs, f: config::DegradationSection) -> Result<Status, CliError> {
    let defaults = NnModelParams::default();
    let ecc = pick_list(a.ecc, f.ecc, vec!["none".into()])
        .iter()
        .map(|s| parse_key("degradation.ecc", s))
        .collect::<Result<Vec<EccKind>, _>>()?;
    let resolved = DegradationResolved {
        p_input: pick_list(a.p_input, f.p_input, vec![1e-9, 1e-10, 1e-11]),
        t_batches: pick_list(a.t_batches, f.t_batches, (0..=8).map(|k| 10f64.powi(k)).collect()),
        ecc,
        w_weights: check_positive("degradation.W", pick(a.w_weights, f.w_weights, defaults.w_weights))?,
        model: parse_key("degradation.model", &pick(a.model, f.model, "pairs".into()))?,
        bits: pick(a.bits, count("degradation.bits", f.bits)?, defaults.bits_per_weight),
        m: pick(a.m, count("degradation.m", f.m)?, defaults.block_side),
    };
    for &p in &resolved.p_input {
        check_probability("degradation.p_input", p)?;
    }
    for &t in &resolved.t_batches {
        check_positive("degradation.T", t)?;
    }
    let mut rows = Vec::new();
    for &kind in &resolved.ecc {
        for &p in &resolved.p_input {
            for &t in &resolved.t_batches {
                let params = NnModelParams {
                    p_input: p,
                    t_batches: t,
                    w_weights: resolved.w_weights,
                    bits_per_weight: resolved.bits,
                    block_side: resolved.m,
                    ..defaults
                };
                params.validate().map_err(|e| CliError::Config(format!("degradation: {e}")))?;
                let d = weight_degradation(&params, kind, resolved.model);
                rows.push(DegradationRow::new(&params, kind, resolved.model, &d));
            }
        }
    }
    emit(ctx, "degradation", &resolved, &rows)?;
    Ok(Status::Done)
}

fn dump_netlist(ctx: &Ctx, a: args::DumpNetlistArgs, f: config::DumpNetlistSection) -> Result<Status, CliError> {
    let function = pick(a.function, f.function, "multiplier".into());
    let bits = check_range("dump_netlist.bits", pick(a.bits, count("dump_netlist.bits", f.bits)?, 8), 1, 32)?;
    let orientation: Orientation =
        parse_key("dump_netlist.orientation", &pick(a.orientation, f.orientation, "in-row".into()))?;
    let prog = match function.as_str() {
        "multiplier" => build_multiplier(bits).map_err(run_err)?,
        "full-adder" => build_full_adder(),
        other => {
            return Err(CliError::Config(format!(
                "dump_netlist.function: unknown function {other:?} (expected multiplier or full-adder)"
            )))
        }
    };
    let text = prog.with_orientation(orientation).to_text();
    with_output(ctx, "netlist", "txt", |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(Status::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn none_mode_emitted_once() {
        let plans = sweep_plans(
            &[TmrMode::None, TmrMode::Serial, TmrMode::None],
            &[Voting::Min3, Voting::Ideal],
        );
        assert_eq!(
            plans,
            vec![
                TmrPlan::baseline(),
                TmrPlan::new(TmrMode::Serial, Voting::Min3),
                TmrPlan::new(TmrMode::Serial, Voting::Ideal),
            ]
        );
    }

    #[test]
    fn hash_ignores_nothing_it_is_given() {
        let h1 = config_hash("nn", 1, &vec![1.0]);
        assert_eq!(h1.len(), 16);
        assert_eq!(h1, config_hash("nn", 1, &vec![1.0]));
        assert_ne!(h1, config_hash("nn", 2, &vec![1.0]));
        assert_ne!(h1, config_hash("nn", 1, &vec![2.0]));
    }

    #[test]
    fn flip_lists() {
        assert_eq!(parse_flips(&["1:2".into(), " 3:4".into()], 8).unwrap(), vec![(1, 2), (3, 4)]);
        assert!(parse_flips(&["8:0".into()], 8).is_err());
        assert!(parse_flips(&["12".into()], 8).is_err());
    }
}
