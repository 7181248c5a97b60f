//! CSV and JSON emission for experiment results.
//!
//! Every CSV starts with one `#` comment line carrying the tool version,
//! experiment, seed, configuration hash and RNG, followed by a header row and
//! one row per grid point. JSON output is `{"meta": ..., "rows": [...]}` with
//! the same keys.

use std::io::Write;

use serde::Serialize;

use crate::analytics::{Degradation, EccKind, EccResidualModel, MonteCarloResult, NnModelParams};
use crate::ecc::{BlockOutcome, BlockReport};
use crate::tmr::TmrMode;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Provenance embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub rng: String,
}

impl ReportMeta {
    pub fn header_comment(&self) -> String {
        format!(
            "# {} {} experiment={} seed={} config={} rng={}",
            self.tool, self.version, self.experiment, self.seed, self.config_hash, self.rng
        )
    }
}

/// A row type with a fixed CSV column order.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

/// Monte Carlo multiplication row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub experiment: String,
    pub mode: String,
    pub voting: String,
    pub bit_width: usize,
    pub p_gate: f64,
    pub p_input: f64,
    pub trials: u64,
    pub failures: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub cycles: u64,
    pub area_cells: usize,
    pub seed: u64,
}

impl CsvRow for McRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "mode",
        "voting",
        "bit_width",
        "p_gate",
        "p_input",
        "trials",
        "failures",
        "p_hat",
        "ci_lo",
        "ci_hi",
        "cycles",
        "area_cells",
        "seed",
    ];
}

impl McRow {
    pub fn from_result(experiment: &str, r: &MonteCarloResult) -> Self {
        Self {
            experiment: experiment.to_string(),
            mode: r.plan.mode.name().to_string(),
            voting: match r.plan.mode {
                TmrMode::None => "none".to_string(),
                _ => r.plan.voting.name().to_string(),
            },
            bit_width: r.bit_width,
            p_gate: r.p_gate,
            p_input: 0.0,
            trials: r.trials,
            failures: r.failures,
            p_hat: r.p_hat,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            cycles: r.cycles,
            area_cells: r.area_cells,
            seed: r.seed,
        }
    }
}

/// Network misclassification row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnRow {
    pub experiment: String,
    pub p_mult: f64,
    pub p_mask: f64,
    #[serde(rename = "M")]
    pub m_mults: f64,
    pub p_net: f64,
    pub union_bound: f64,
    pub clamped: bool,
}

impl CsvRow for NnRow {
    const HEADER: &'static [&'static str] = &["experiment", "p_mult", "p_mask", "M", "p_net", "union_bound", "clamped"];
}

/// Weight degradation row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradationRow {
    pub experiment: String,
    pub ecc: String,
    pub model: String,
    pub p_input: f64,
    #[serde(rename = "T")]
    pub t_batches: f64,
    #[serde(rename = "W")]
    pub w_weights: f64,
    pub bits: u32,
    pub m: u32,
    pub q_batch: f64,
    pub expected_corrupted: f64,
    pub clamped: bool,
}

impl CsvRow for DegradationRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "ecc",
        "model",
        "p_input",
        "T",
        "W",
        "bits",
        "m",
        "q_batch",
        "expected_corrupted",
        "clamped",
    ];
}

impl DegradationRow {
    pub fn new(params: &NnModelParams, ecc: EccKind, model: EccResidualModel, d: &Degradation) -> Self {
        Self {
            experiment: "degradation".into(),
            ecc: ecc.to_string(),
            model: match ecc {
                EccKind::None => "independent".into(),
                EccKind::Diagonal => model.name().into(),
            },
            p_input: params.p_input,
            t_batches: params.t_batches,
            w_weights: params.w_weights,
            bits: params.bits_per_weight,
            m: params.block_side,
            q_batch: d.q_batch,
            expected_corrupted: d.expected_corrupted,
            clamped: d.clamped,
        }
    }
}

/// ECC update-cost comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EccCostRow {
    pub experiment: String,
    pub orientation: String,
    pub n: usize,
    pub m: usize,
    pub banks: u64,
    pub diagonal_cycles: u64,
    pub naive_cycles: u64,
}

impl CsvRow for EccCostRow {
    const HEADER: &'static [&'static str] =
        &["experiment", "orientation", "n", "m", "banks", "diagonal_cycles", "naive_cycles"];
}

/// One multiplication evaluated directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultRow {
    pub experiment: String,
    pub mode: String,
    pub voting: String,
    pub bit_width: usize,
    pub a: u64,
    pub b: u64,
    pub product: u64,
    pub expected: u64,
    pub correct: bool,
    pub cycles: u64,
    pub area_cells: usize,
    pub seed: u64,
}

impl CsvRow for MultRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "mode",
        "voting",
        "bit_width",
        "a",
        "b",
        "product",
        "expected",
        "correct",
        "cycles",
        "area_cells",
        "seed",
    ];
}

/// Exhaustive gate evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateRow {
    pub experiment: String,
    pub gate: String,
    pub inputs: String,
    pub output: u8,
}

impl CsvRow for GateRow {
    const HEADER: &'static [&'static str] = &["experiment", "gate", "inputs", "output"];
}

/// Verification outcome of one non-clean ECC block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EccBlockRow {
    pub experiment: String,
    pub block_row: usize,
    pub block_col: usize,
    pub outcome: String,
    /// Corrected or candidate positions as `row:col`, `;`-separated.
    pub positions: String,
    pub leading: u64,
    pub counter: u64,
    pub row_aux: u64,
}

impl CsvRow for EccBlockRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "block_row",
        "block_col",
        "outcome",
        "positions",
        "leading",
        "counter",
        "row_aux",
    ];
}

impl EccBlockRow {
    pub fn from_report(experiment: &str, b: &BlockReport) -> Self {
        let fmt = |ps: &[(usize, usize)]| ps.iter().map(|(r, c)| format!("{r}:{c}")).collect::<Vec<_>>().join(";");
        let (outcome, positions) = match &b.outcome {
            BlockOutcome::Clean => ("clean".to_string(), String::new()),
            BlockOutcome::Corrected { row, col } => ("corrected".into(), fmt(&[(*row, *col)])),
            BlockOutcome::CheckBitRepaired { bank, index } => (format!("check_bit_repaired:{bank:?}"), index.to_string()),
            BlockOutcome::Ambiguous { candidates } => ("ambiguous".into(), fmt(candidates)),
            BlockOutcome::Uncorrectable => ("uncorrectable".into(), String::new()),
        };
        Self {
            experiment: experiment.to_string(),
            block_row: b.block_row,
            block_col: b.block_col,
            outcome,
            positions,
            leading: b.syndrome.leading,
            counter: b.syndrome.counter,
            row_aux: b.syndrome.row_aux,
        }
    }
}

/// ECC-wrapped function run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EccRunRow {
    pub experiment: String,
    pub bit_width: usize,
    pub lanes: usize,
    pub flips: usize,
    pub corrected: usize,
    pub uncorrectable: usize,
    pub aborted: bool,
    pub correct_outputs: usize,
    pub program_cycles: u64,
    pub ecc_cycles: u64,
    pub overhead_ratio: f64,
    pub seed: u64,
}

impl CsvRow for EccRunRow {
    const HEADER: &'static [&'static str] = &[
        "experiment",
        "bit_width",
        "lanes",
        "flips",
        "corrected",
        "uncorrectable",
        "aborted",
        "correct_outputs",
        "program_cycles",
        "ecc_cycles",
        "overhead_ratio",
        "seed",
    ];
}

/// Comment line, header row, then `rows`.
pub fn write_csv<R: CsvRow, W: Write>(out: W, meta: &ReportMeta, rows: &[R]) -> Result<(), ReportError> {
    let mut out = out;
    writeln!(out, "{}", meta.header_comment())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(R::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a, R: Serialize> {
    meta: &'a ReportMeta,
    rows: &'a [R],
}

pub fn write_json<R: Serialize, W: Write>(out: W, meta: &ReportMeta, rows: &[R]) -> Result<(), ReportError> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &JsonDoc { meta, rows })?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            tool: "mpim".into(),
            version: "0.0.0".into(),
            experiment: "nn".into(),
            seed: 3,
            config_hash: "abc".into(),
            rng: "rng".into(),
        }
    }

    #[test]
    fn csv_layout() {
        let rows = vec![NnRow {
            experiment: "nn".into(),
            p_mult: 1e-9,
            p_mask: 3e-4,
            m_mults: 612e6,
            p_net: 0.5,
            union_bound: 0.6,
            clamped: false,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &meta(), &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# mpim 0.0.0 experiment=nn seed=3 config=abc rng=rng");
        assert_eq!(lines[1], "experiment,p_mult,p_mask,M,p_net,union_bound,clamped");
        assert_eq!(lines[2], "nn,1e-9,0.0003,612000000.0,0.5,0.6,false");
    }

    #[test]
    fn empty_table_still_has_header() {
        let mut buf = Vec::new();
        write_csv::<McRow, _>(&mut buf, &meta(), &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("experiment,mode,voting,bit_width,p_gate,p_input,trials,failures,p_hat,ci_lo,ci_hi,cycles,area_cells,seed"));
    }

    #[test]
    fn json_has_meta_and_rows() {
        let mut buf = Vec::new();
        write_json::<McRow, _>(&mut buf, &meta(), &[]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["meta"]["seed"], 3);
        assert!(v["rows"].as_array().unwrap().is_empty());
    }
}
