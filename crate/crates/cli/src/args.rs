//! Command-line flags.
//!
//! Every flag is optional at this level; defaults and config-file values are
//! merged by [`crate::run`]. Numeric flags accept scientific notation, so
//! `--trials 2e4` and `--M 6.12e8` both work.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mpim", version, about = "Reliability experiments for stateful-logic crossbars")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file (default: stdout, or $MPIM_OUT_DIR/<experiment>.<ext>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_parser = parse_usize)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_u64)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustive truth tables of every gate, evaluated on a crossbar.
    Gates,
    /// Single or batched multiplication with optional faults and TMR.
    Mult(MultArgs),
    /// Diagonal-parity ECC tools.
    #[command(subcommand)]
    Ecc(EccCommand),
    /// Monte Carlo failure rate over a p_gate x TMR-mode grid.
    TmrSweep(TmrSweepArgs),
    /// Misclassification probability of the network model.
    Nn(NnArgs),
    /// Expected corrupted weights after T batches.
    Degradation(DegradationArgs),
    /// Print a built-in micro-program in netlist text form.
    DumpNetlist(DumpNetlistArgs),
}

#[derive(Debug, Args)]
pub struct MultArgs {
    #[arg(long, value_parser = parse_usize)]
    pub bits: Option<usize>,
    /// First operand; with `--b`, runs one multiplication.
    #[arg(long, value_parser = parse_u64)]
    pub a: Option<u64>,
    #[arg(long, value_parser = parse_u64)]
    pub b: Option<u64>,
    /// Random multiplications when `--a/--b` are absent.
    #[arg(long, value_parser = parse_u64)]
    pub trials: Option<u64>,
    #[arg(long = "p-gate", value_parser = parse_probability)]
    pub p_gate: Option<f64>,
    #[arg(long)]
    pub tmr: Option<String>,
    #[arg(long)]
    pub voting: Option<String>,
    /// Use this multiplier netlist instead of the built-in one.
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Print the multiplier netlist and exit.
    #[arg(long = "dump-netlist")]
    pub dump_netlist: bool,
    #[arg(long = "batch-lanes", value_parser = parse_usize)]
    pub batch_lanes: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EccCommand {
    /// Encode a crossbar, flip cells, verify and correct.
    Verify(EccVerifyArgs),
    /// Flip input cells, then run a multiplication wrapped with ECC.
    Inject(EccInjectArgs),
    /// Update cost of diagonal vs naive parity per orientation.
    Overhead(EccOverheadArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct EccGeometryArgs {
    #[arg(long, value_parser = parse_usize)]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    pub m: Option<usize>,
    /// Parity banks per block: 2 (diagonals only) or 3.
    #[arg(long)]
    pub banks: Option<String>,
}

#[derive(Debug, Args)]
pub struct EccVerifyArgs {
    #[command(flatten)]
    pub geometry: EccGeometryArgs,
    /// Crossbar contents as rows of `0`/`1`; random when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cells to flip after encoding, as `row:col` pairs.
    #[arg(long, value_delimiter = ',')]
    pub flips: Vec<String>,
    /// Additional distinct random cells to flip.
    #[arg(long = "random-flips", value_parser = parse_usize)]
    pub random_flips: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EccInjectArgs {
    #[command(flatten)]
    pub geometry: EccGeometryArgs,
    #[arg(long, value_parser = parse_usize)]
    pub bits: Option<usize>,
    #[arg(long, value_parser = parse_usize)]
    pub lanes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub flips: Vec<String>,
    /// Distinct random input cells to flip.
    #[arg(long = "random-flips", value_parser = parse_usize)]
    pub random_flips: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EccOverheadArgs {
    /// Crossbar sizes.
    #[arg(long = "n", value_delimiter = ',', value_parser = parse_usize)]
    pub n: Vec<usize>,
    #[arg(long, value_parser = parse_usize)]
    pub m: Option<usize>,
    #[arg(long)]
    pub banks: Option<String>,
}

#[derive(Debug, Args)]
pub struct TmrSweepArgs {
    #[arg(long, value_parser = parse_usize)]
    pub bits: Option<usize>,
    #[arg(long = "p-gate", value_delimiter = ',', value_parser = parse_probability)]
    pub p_gate: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub voting: Vec<String>,
    #[arg(long, value_parser = parse_u64)]
    pub trials: Option<u64>,
    #[arg(long = "batch-lanes", value_parser = parse_usize)]
    pub batch_lanes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    #[arg(long = "p-mult", value_delimiter = ',', value_parser = parse_probability)]
    pub p_mult: Vec<f64>,
    #[arg(long = "p-mask", value_parser = parse_probability)]
    pub p_mask: Option<f64>,
    /// Multiplications per inference.
    #[arg(long = "M", value_parser = parse_positive)]
    pub m_mults: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DegradationArgs {
    #[arg(long = "p-input", value_delimiter = ',', value_parser = parse_probability)]
    pub p_input: Vec<f64>,
    /// Batch counts.
    #[arg(long = "T", value_delimiter = ',', value_parser = parse_positive)]
    pub t_batches: Vec<f64>,
    /// `none`, `diagonal`, or both.
    #[arg(long, value_delimiter = ',')]
    pub ecc: Vec<String>,
    /// Stored weights.
    #[arg(long = "W", value_parser = parse_positive)]
    pub w_weights: Option<f64>,
    /// Residual model for protected blocks: pairs, pairs-intra or exact.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = parse_u32)]
    pub bits: Option<u32>,
    #[arg(long, value_parser = parse_u32)]
    pub m: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DumpNetlistArgs {
    /// `multiplier` (default) or `full-adder`.
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long, value_parser = parse_usize)]
    pub bits: Option<usize>,
    /// `in-row` or `in-column`.
    #[arg(long)]
    pub orientation: Option<String>,
}

/// Non-negative integer, also written as `2e4` or `1.5e3`.
pub fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64) {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as u64)
}

pub fn parse_usize(s: &str) -> Result<usize, String> {
    parse_u64(s).and_then(|v| usize::try_from(v).map_err(|_| format!("`{s}` is too large")))
}

pub fn parse_u32(s: &str) -> Result<u32, String> {
    parse_u64(s).and_then(|v| u32::try_from(v).map_err(|_| format!("`{s}` is too large")))
}

pub fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("`{s}` is not a probability in [0, 1]"))
    }
}

pub fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be positive"))
    }
}
