//! Reliability estimates: Monte Carlo multiplication failure rates and the
//! closed-form network-level extrapolations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitLine;
use crate::crossbar::Crossbar;
use crate::fault::{derive_seed, FaultConfig, FaultConfigError, FaultInjector};
use crate::microcode::{build_multiplier, BuildError, MicroProgram};
use crate::tmr::{required_span, run_tmr, TmrError, TmrPlan};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Values below this are reported as zero.
pub const UNDERFLOW: f64 = 1e-300;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// `(1 - p)^k` through `exp(k * log1p(-p))`.
pub fn pow1m(p: f64, k: f64) -> f64 {
    (k * (-p).ln_1p()).exp()
}

/// `1 - (1 - p)^k` without cancellation for tiny `p`.
pub fn one_minus_pow1m(p: f64, k: f64) -> f64 {
    // `+ 0.0` turns the `-0.0` produced at p = 0 into `0.0`.
    -(k * (-p).ln_1p()).exp_m1() + 0.0
}

/// `(value, clamped)`: values under [`UNDERFLOW`] become 0 with the flag set.
pub fn clamp_underflow(x: f64) -> (f64, bool) {
    if x != 0.0 && x.abs() < UNDERFLOW {
        (0.0, true)
    } else {
        (x, false)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    BadProbability { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Fault(#[from] FaultConfigError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Tmr(#[from] TmrError),
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

fn check_probability(name: &'static str, value: f64) -> Result<(), AnalyticsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalyticsError::BadProbability { name, value })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), AnalyticsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AnalyticsError::NotPositive { name, value })
    }
}

/// Parameters of the accelerator case study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnModelParams {
    /// Fraction of multiplication errors that change the classification.
    pub p_mask: f64,
    /// Multiplications per inference.
    pub m_mults: f64,
    /// Stored weights.
    pub w_weights: f64,
    /// Consecutive batches.
    pub t_batches: f64,
    /// Per-access bit corruption probability.
    pub p_input: f64,
    pub bits_per_weight: u32,
    /// ECC block side for the protected model.
    pub block_side: u32,
}

impl Default for NnModelParams {
    fn default() -> Self {
        Self {
            p_mask: 3e-4,
            m_mults: 612e6,
            w_weights: 62.4e6,
            t_batches: 1.0,
            p_input: 0.0,
            bits_per_weight: 32,
            block_side: 16,
        }
    }
}

impl NnModelParams {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        check_probability("p_mask", self.p_mask)?;
        check_probability("p_input", self.p_input)?;
        check_positive("M", self.m_mults)?;
        check_positive("W", self.w_weights)?;
        check_positive("T", self.t_batches)?;
        check_positive("bits_per_weight", self.bits_per_weight as f64)?;
        check_positive("block_side", self.block_side as f64)?;
        if (self.block_side as u64).pow(2) < self.bits_per_weight as u64 {
            return Err(AnalyticsError::NotPositive {
                name: "block cells minus weight bits",
                value: (self.block_side as f64).powi(2) - self.bits_per_weight as f64,
            });
        }
        Ok(())
    }
}

/// Probability that one inference is misclassified: `1 - (1 - p_mask p_mult)^M`.
pub fn nn_failure_probability(params: &NnModelParams, p_mult: f64) -> f64 {
    one_minus_pow1m(params.p_mask * p_mult, params.m_mults)
}

/// Weight protection assumed by [`weight_degradation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EccKind {
    None,
    Diagonal,
}

impl std::str::FromStr for EccKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(EccKind::None),
            "diagonal" => Ok(EccKind::Diagonal),
            other => Err(format!("unknown ECC {other:?} (expected none or diagonal)")),
        }
    }
}

impl std::fmt::Display for EccKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EccKind::None => "none",
            EccKind::Diagonal => "diagonal",
        })
    }
}

/// Per-batch residual corruption model for ECC-protected weights.
///
/// A single flip per block per batch is corrected on access; a weight is
/// lost when it takes a flip in a batch where its block sees two or more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EccResidualModel {
    /// `b (m^2 - 1) p^2`: a flip in one of the `b` weight bits paired with a
    /// flip anywhere else in the block.
    #[default]
    Pairs,
    /// [`EccResidualModel::Pairs`] plus `C(b, 2) p^2` for pairs inside the weight.
    PairsIntra,
    /// `1 - (1-p)^b - b p (1-p)^(m^2 - 1)`: the event itself, no approximation.
    Exact,
}

impl EccResidualModel {
    pub fn name(self) -> &'static str {
        match self {
            EccResidualModel::Pairs => "pairs",
            EccResidualModel::PairsIntra => "pairs-intra",
            EccResidualModel::Exact => "exact",
        }
    }
}

impl std::str::FromStr for EccResidualModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pairs" => Ok(EccResidualModel::Pairs),
            "pairs-intra" => Ok(EccResidualModel::PairsIntra),
            "exact" => Ok(EccResidualModel::Exact),
            other => Err(format!("unknown ECC model {other:?} (expected pairs, pairs-intra or exact)")),
        }
    }
}

/// Probability that one weight becomes corrupted during one batch.
pub fn per_batch_corruption(params: &NnModelParams, ecc: EccKind, model: EccResidualModel) -> f64 {
    let p = params.p_input;
    let b = params.bits_per_weight as f64;
    let cells = (params.block_side as f64).powi(2);
    match (ecc, model) {
        (EccKind::None, _) => one_minus_pow1m(p, b),
        (EccKind::Diagonal, EccResidualModel::Pairs) => b * (cells - 1.0) * p * p,
        (EccKind::Diagonal, EccResidualModel::PairsIntra) => (b * (cells - 1.0) + b * (b - 1.0) / 2.0) * p * p,
        (EccKind::Diagonal, EccResidualModel::Exact) => {
            (one_minus_pow1m(p, b) - b * p * pow1m(p, cells - 1.0)).max(0.0)
        }
    }
}

/// Expected number of corrupted weights after `T` batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Degradation {
    pub q_batch: f64,
    pub expected_corrupted: f64,
    /// True when a result fell below [`UNDERFLOW`] and was reported as 0.
    pub clamped: bool,
}

pub fn weight_degradation(params: &NnModelParams, ecc: EccKind, model: EccResidualModel) -> Degradation {
    let q = per_batch_corruption(params, ecc, model).min(1.0);
    let expected = params.w_weights * one_minus_pow1m(q, params.t_batches);
    let (q_batch, c1) = clamp_underflow(q);
    let (expected_corrupted, c2) = clamp_underflow(expected);
    Degradation {
        q_batch,
        expected_corrupted,
        clamped: c1 || c2,
    }
}

/// One Monte Carlo multiplication experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub bit_width: usize,
    pub p_gate: f64,
    pub trials: u64,
    pub plan: TmrPlan,
    pub seed: u64,
    /// Lanes simulated together on one crossbar.
    pub batch_lanes: usize,
}

impl McConfig {
    pub const DEFAULT_BATCH_LANES: usize = 256;

    pub fn new(bit_width: usize, p_gate: f64, trials: u64, plan: TmrPlan, seed: u64) -> Self {
        Self {
            bit_width,
            p_gate,
            trials,
            plan,
            seed,
            batch_lanes: Self::DEFAULT_BATCH_LANES,
        }
    }
}

/// Estimated multiplication failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub bit_width: usize,
    pub p_gate: f64,
    pub trials: u64,
    pub failures: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub plan: TmrPlan,
    /// Cycles of one protected multiplication (compute plus vote).
    pub cycles: u64,
    pub area_cells: usize,
    pub seed: u64,
}

const STREAM_INPUT: u64 = 1;
const STREAM_FAULT: u64 = 2;

struct BatchOutcome {
    failures: u64,
    cycles: u64,
    area_cells: usize,
}

fn run_batch(prog: &MicroProgram, cfg: &McConfig, batch: u64, lanes_here: usize) -> Result<BatchOutcome, AnalyticsError> {
    let rpl = cfg.plan.mode.rows_per_lane();
    let n = (cfg.batch_lanes * rpl).max(required_span(prog, cfg.plan.mode));
    let mut xbar = Crossbar::new(n).map_err(TmrError::from)?;
    let lanes = BitLine::from_indices(n, (0..lanes_here).map(|i| i * rpl));
    let w = cfg.bit_width;
    let mask = if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
    let mut input_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_INPUT, batch));
    let values: Vec<Vec<u64>> = (0..lanes_here)
        .map(|_| vec![input_rng.random::<u64>() & mask, input_rng.random::<u64>() & mask])
        .collect();
    let fcfg = FaultConfig::gate_faults(cfg.p_gate, cfg.seed);
    let mut faults = FaultInjector::with_stream(fcfg, derive_seed(cfg.seed, STREAM_FAULT, batch));
    let r = run_tmr(prog, &mut xbar, 0, &lanes, &values, cfg.plan, &mut faults)?;
    let failures = r
        .outputs
        .iter()
        .zip(&values)
        .filter(|(&out, v)| out != v[0].wrapping_mul(v[1]))
        .count() as u64;
    Ok(BatchOutcome {
        failures,
        cycles: r.cycles,
        area_cells: r.area_cells,
    })
}

/// Fault-injected multiplications on uniform random inputs.
///
/// Trials run in batches of [`McConfig::batch_lanes`] lanes; each batch has
/// its own input and fault streams keyed by `(seed, batch)`, so the result
/// does not depend on how batches are spread over threads.
pub fn estimate_p_mult(cfg: &McConfig) -> Result<MonteCarloResult, AnalyticsError> {
    let prog = build_multiplier(cfg.bit_width)?;
    estimate_p_mult_with(&prog, cfg)
}

/// [`estimate_p_mult`] for a caller-supplied multiplier program with inputs
/// `a`, `b` of `cfg.bit_width` bits each.
pub fn estimate_p_mult_with(prog: &MicroProgram, cfg: &McConfig) -> Result<MonteCarloResult, AnalyticsError> {
    check_probability("p_gate", cfg.p_gate)?;
    if cfg.trials == 0 {
        return Err(AnalyticsError::NoTrials);
    }
    if cfg.batch_lanes == 0 {
        return Err(AnalyticsError::NotPositive {
            name: "batch_lanes",
            value: 0.0,
        });
    }
    let b = cfg.batch_lanes as u64;
    let batches = cfg.trials.div_ceil(b);
    let outcomes: Vec<BatchOutcome> = (0..batches)
        .into_par_iter()
        .map(|i| {
            let here = (cfg.trials - i * b).min(b) as usize;
            run_batch(prog, cfg, i, here)
        })
        .collect::<Result<_, _>>()?;
    let failures: u64 = outcomes.iter().map(|o| o.failures).sum();
    let (ci_lo, ci_hi) = wilson_interval(failures, cfg.trials, Z95);
    Ok(MonteCarloResult {
        bit_width: cfg.bit_width,
        p_gate: cfg.p_gate,
        trials: cfg.trials,
        failures,
        p_hat: failures as f64 / cfg.trials as f64,
        ci_lo,
        ci_hi,
        plan: cfg.plan,
        cycles: outcomes[0].cycles,
        area_cells: outcomes[0].area_cells,
        seed: cfg.seed,
    })
}

/// Grid of Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub bit_width: usize,
    pub p_gates: Vec<f64>,
    pub plans: Vec<TmrPlan>,
    pub trials: u64,
    pub seed: u64,
    pub batch_lanes: usize,
}

/// Run every `(p_gate, plan)` point. Rows come out in grid order, `p_gate`
/// outermost. Point `i` of the `p_gate` list uses seed `derive_seed(seed, 0, i)`
/// for every plan, so all plans at one point see the same inputs.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<MonteCarloResult>, AnalyticsError> {
    for &p in &cfg.p_gates {
        check_probability("p_gate", p)?;
    }
    if cfg.trials == 0 && !cfg.p_gates.is_empty() && !cfg.plans.is_empty() {
        return Err(AnalyticsError::NoTrials);
    }
    let mut rows = Vec::with_capacity(cfg.p_gates.len() * cfg.plans.len());
    for (i, &p_gate) in cfg.p_gates.iter().enumerate() {
        let point_seed = derive_seed(cfg.seed, 0, i as u64);
        for &plan in &cfg.plans {
            let mut mc = McConfig::new(cfg.bit_width, p_gate, cfg.trials, plan, point_seed);
            mc.batch_lanes = cfg.batch_lanes;
            rows.push(estimate_p_mult(&mc)?);
        }
    }
    Ok(rows)
}

/// Run `f` on a pool of `jobs` threads (0 = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, AnalyticsError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AnalyticsError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log10(), y.log10())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tmr::{TmrMode, Voting};

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04, "{hi}");
        let (lo, hi) = wilson_interval(50, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn wilson_coverage_on_known_p() {
        let p = 0.03;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 400;
        let covered = (0..reps)
            .filter(|_| {
                let k = (0..1000).filter(|_| rng.random_bool(p)).count() as u64;
                let (lo, hi) = wilson_interval(k, 1000, Z95);
                lo <= p && p <= hi
            })
            .count();
        assert!(covered as f64 / reps as f64 >= 0.9, "{covered}");
    }

    #[test]
    fn tiny_probabilities_keep_precision() {
        assert!((one_minus_pow1m(1e-15, 10.0) - 1e-14).abs() < 1e-27);
        assert_eq!(clamp_underflow(1e-310), (0.0, true));
        assert_eq!(clamp_underflow(0.0), (0.0, false));
    }

    #[test]
    fn nn_zero_and_union_bound() {
        let params = NnModelParams::default();
        assert_eq!(nn_failure_probability(&params, 0.0), 0.0);
        for k in 0..50 {
            let p = 10f64.powf(-12.0 + k as f64 * 0.2);
            let v = nn_failure_probability(&params, p);
            assert!(v <= params.m_mults * params.p_mask * p * (1.0 + 1e-12));
        }
    }

    #[test]
    fn degradation_baseline_saturates() {
        let params = NnModelParams {
            p_input: 1e-9,
            t_batches: 1e15,
            ..Default::default()
        };
        let d = weight_degradation(&params, EccKind::None, EccResidualModel::Pairs);
        assert!((d.expected_corrupted - params.w_weights).abs() / params.w_weights < 1e-6);
    }

    #[test]
    fn residual_models_agree_to_first_order() {
        let params = NnModelParams {
            p_input: 1e-9,
            ..Default::default()
        };
        let pairs = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::Pairs);
        let intra = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::PairsIntra);
        let exact = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::Exact);
        assert!((pairs / 1e-18 - 8160.0).abs() < 1e-6);
        assert!((intra / 1e-18 - 8656.0).abs() < 1e-6);
        // Unordered pairs touching the weight: C(256,2) - C(224,2) = 7664.
        assert!((exact / 1e-18 - 7664.0).abs() < 1.0, "{}", exact / 1e-18);
    }

    #[test]
    fn zero_fault_monte_carlo() {
        let cfg = McConfig::new(4, 0.0, 300, TmrPlan::new(TmrMode::Serial, Voting::Min3), 5);
        let r = estimate_p_mult(&cfg).unwrap();
        assert_eq!(r.failures, 0);
        assert!(r.ci_lo <= r.p_hat && r.p_hat <= r.ci_hi);
    }

    #[test]
    fn monte_carlo_is_thread_count_independent() {
        let cfg = McConfig::new(4, 5e-3, 1000, TmrPlan::baseline(), 9);
        let a = with_jobs(1, || estimate_p_mult(&cfg)).unwrap().unwrap();
        let b = with_jobs(4, || estimate_p_mult(&cfg)).unwrap().unwrap();
        assert_eq!(a, b);
        assert!(a.failures > 0);
    }

    #[test]
    fn sweep_grid_shape() {
        let cfg = SweepConfig {
            bit_width: 2,
            p_gates: vec![1e-2, 1e-3, 1e-4, 1e-5, 0.0],
            plans: vec![
                TmrPlan::baseline(),
                TmrPlan::new(TmrMode::Serial, Voting::Min3),
                TmrPlan::new(TmrMode::Parallel, Voting::Min3),
            ],
            trials: 64,
            seed: 1,
            batch_lanes: 64,
        };
        assert_eq!(sweep(&cfg).unwrap().len(), 15);
        let empty = SweepConfig {
            p_gates: vec![],
            ..cfg
        };
        assert!(sweep(&empty).unwrap().is_empty());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1e-3, 1e-4, 1e-5].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-9);
    }
}
