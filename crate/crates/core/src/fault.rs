//! Stochastic soft-error injection.
//!
//! Two error classes are modelled:
//!
//! * **direct** errors hit an operation while it executes: a stateful gate
//!   produces the complement of its correct output (`p_gate`), or a write/INIT
//!   leaves the cell untouched (`p_write`);
//! * **indirect** errors corrupt stored state: every access to a bit flips it
//!   with probability `p_input`, and an optional per-(bit, time unit) drift
//!   probability covers retention loss.
//!
//! Draws are made per (step, selected lane) so that the rows of a parallel
//! step fail independently. All randomness comes from a ChaCha8 stream
//! (`rand_chacha` 0.9) keyed by a 64-bit seed; sub-streams for parallel trials
//! are derived with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitLine;
use crate::crossbar::{Crossbar, Rect};

/// Name and version of the generator, embedded in experiment metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64; sub-seeds via SplitMix64 finalizer";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultConfigError {
    #[error("{name} = {value} is not a probability in [0, 1]")]
    BadProbability { name: &'static str, value: f64 },
}

/// Fault probabilities and seed for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Probability a single gate evaluation produces the wrong output.
    pub p_gate: f64,
    /// Probability a write (including INIT) fails and leaves the cell as it was.
    pub p_write: f64,
    /// Probability a single bit access corrupts that bit.
    pub p_input: f64,
    /// Probability a stored bit flips per time unit.
    pub p_drift: f64,
    pub seed: u64,
    pub inject_direct: bool,
    pub inject_indirect: bool,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self::fault_free(0)
    }
}

impl FaultConfig {
    pub fn fault_free(seed: u64) -> Self {
        Self {
            p_gate: 0.0,
            p_write: 0.0,
            p_input: 0.0,
            p_drift: 0.0,
            seed,
            inject_direct: false,
            inject_indirect: false,
        }
    }

    /// Direct gate faults only.
    pub fn gate_faults(p_gate: f64, seed: u64) -> Self {
        Self {
            p_gate,
            inject_direct: true,
            ..Self::fault_free(seed)
        }
    }

    /// Indirect per-access faults only.
    pub fn access_faults(p_input: f64, seed: u64) -> Self {
        Self {
            p_input,
            inject_indirect: true,
            ..Self::fault_free(seed)
        }
    }

    pub fn validate(&self) -> Result<(), FaultConfigError> {
        for (name, value) in [
            ("p_gate", self.p_gate),
            ("p_write", self.p_write),
            ("p_input", self.p_input),
            ("p_drift", self.p_drift),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FaultConfigError::BadProbability { name, value });
            }
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
///
/// Used to key independent per-batch fault and input streams so that a
/// parallel run produces the same draws as a sequential one.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Source of direct faults for crossbar operations.
pub trait FaultSource {
    /// Subset of `lanes` whose gate output is flipped, or `None` if no lane fails.
    fn gate_faults(&mut self, lanes: &BitLine) -> Option<BitLine>;

    /// Subset of `lanes` whose write (or INIT) fails.
    fn write_faults(&mut self, lanes: &BitLine) -> Option<BitLine>;
}

/// The fault-free oracle.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoFaults;

impl FaultSource for NoFaults {
    fn gate_faults(&mut self, _lanes: &BitLine) -> Option<BitLine> {
        None
    }

    fn write_faults(&mut self, _lanes: &BitLine) -> Option<BitLine> {
        None
    }
}

/// One injected gate fault, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEvent {
    pub phase: u32,
    pub lane: usize,
}

/// Seeded injector owning one fault stream.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    cfg: FaultConfig,
    rng: ChaCha8Rng,
    suppressed: bool,
    phase: u32,
    trace: Option<Vec<FaultEvent>>,
    gate_fault_count: u64,
}

impl FaultInjector {
    pub fn new(cfg: FaultConfig) -> Self {
        Self::with_stream(cfg, cfg.seed)
    }

    /// Injector with `cfg`'s probabilities but an explicit stream seed.
    pub fn with_stream(cfg: FaultConfig, stream_seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(stream_seed),
            suppressed: false,
            phase: 0,
            trace: None,
            gate_fault_count: 0,
        }
    }

    pub fn config(&self) -> &FaultConfig {
        &self.cfg
    }

    /// Record every injected gate fault with the current phase tag.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[FaultEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn set_phase(&mut self, phase: u32) {
        self.phase = phase;
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn gate_fault_count(&self) -> u64 {
        self.gate_fault_count
    }

    /// While suppressed no direct faults are injected and no draws are made.
    pub fn set_suppressed(&mut self, suppressed: bool) {
        self.suppressed = suppressed;
    }

    fn direct_active(&self, p: f64) -> bool {
        self.cfg.inject_direct && !self.suppressed && p > 0.0
    }

    /// Returns `correct` with probability `1 - p_gate`, its complement otherwise.
    pub fn maybe_corrupt_gate(&mut self, correct: bool) -> bool {
        if !self.direct_active(self.cfg.p_gate) {
            return correct;
        }
        if self.rng.random_bool(self.cfg.p_gate) {
            self.gate_fault_count += 1;
            !correct
        } else {
            correct
        }
    }

    /// Flip each bit independently with probability `p_input`.
    pub fn corrupt_on_access(&mut self, bits: &[bool]) -> Vec<bool> {
        let p = self.cfg.p_input;
        if !self.cfg.inject_indirect || p == 0.0 {
            return bits.to_vec();
        }
        bits.iter().map(|&b| b ^ self.rng.random_bool(p)).collect()
    }

    /// In-place variant over a packed line; returns the number of flips.
    pub fn corrupt_line_on_access(&mut self, line: &mut BitLine, lanes: &BitLine) -> usize {
        let p = self.cfg.p_input;
        self.flip_each(line, lanes, p)
    }

    /// Apply `time_units` of retention drift to every cell of `rect`.
    /// Returns the number of flipped cells.
    pub fn apply_drift(&mut self, xbar: &mut Crossbar, rect: Rect, time_units: u64) -> usize {
        if !self.cfg.inject_indirect || self.cfg.p_drift == 0.0 || time_units == 0 {
            return 0;
        }
        // P(odd number of flips in t units) is the observable corruption.
        let t = time_units as f64;
        let p = 0.5 * (1.0 - (1.0 - 2.0 * self.cfg.p_drift).powf(t));
        let mut flips = 0;
        for c in rect.col..rect.col + rect.cols {
            for r in rect.row..rect.row + rect.rows {
                if self.rng.random_bool(p.clamp(0.0, 1.0)) {
                    xbar.flip_cell(r, c);
                    flips += 1;
                }
            }
        }
        flips
    }

    fn flip_each(&mut self, line: &mut BitLine, lanes: &BitLine, p: f64) -> usize {
        if !self.cfg.inject_indirect || p == 0.0 {
            return 0;
        }
        let mut flips = 0;
        for lane in lanes.iter_ones() {
            if self.rng.random_bool(p) {
                line.toggle(lane);
                flips += 1;
            }
        }
        flips
    }

    fn draw_lanes(&mut self, lanes: &BitLine, p: f64) -> Option<BitLine> {
        let mut hit: Option<BitLine> = None;
        for lane in lanes.iter_ones() {
            if self.rng.random_bool(p) {
                hit.get_or_insert_with(|| BitLine::zeros(lanes.len())).set(lane, true);
            }
        }
        hit
    }
}

impl FaultSource for FaultInjector {
    fn gate_faults(&mut self, lanes: &BitLine) -> Option<BitLine> {
        if !self.direct_active(self.cfg.p_gate) {
            return None;
        }
        let hit = self.draw_lanes(lanes, self.cfg.p_gate)?;
        self.gate_fault_count += hit.count_ones() as u64;
        if let Some(trace) = self.trace.as_mut() {
            let phase = self.phase;
            trace.extend(hit.iter_ones().map(|lane| FaultEvent { phase, lane }));
        }
        Some(hit)
    }

    fn write_faults(&mut self, lanes: &BitLine) -> Option<BitLine> {
        if !self.direct_active(self.cfg.p_write) {
            return None;
        }
        self.draw_lanes(lanes, self.cfg.p_write)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_one_probabilities_are_exact() {
        let mut never = FaultInjector::new(FaultConfig::gate_faults(0.0, 1));
        let mut always = FaultInjector::new(FaultConfig::gate_faults(1.0, 1));
        for b in [false, true] {
            for _ in 0..100 {
                assert_eq!(never.maybe_corrupt_gate(b), b);
                assert_eq!(always.maybe_corrupt_gate(b), !b);
            }
        }
    }

    #[test]
    fn half_probability_flip_fraction() {
        let mut inj = FaultInjector::new(FaultConfig::gate_faults(0.5, 42));
        let n = 100_000;
        let flips = (0..n).filter(|_| inj.maybe_corrupt_gate(false)).count();
        // 3 sigma of Binomial(1e5, 0.5) is ~474; the stated bound is 0.01 * n.
        assert!((flips as f64 / n as f64 - 0.5).abs() <= 0.01, "{flips}");
    }

    #[test]
    fn access_corruption_extremes() {
        let bits: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
        let mut none = FaultInjector::new(FaultConfig::access_faults(0.0, 3));
        assert_eq!(none.corrupt_on_access(&bits), bits);
        let mut all = FaultInjector::new(FaultConfig::access_faults(1.0, 3));
        let flipped: Vec<bool> = bits.iter().map(|b| !b).collect();
        assert_eq!(all.corrupt_on_access(&bits), flipped);
    }

    #[test]
    fn access_corruption_rate() {
        let mut inj = FaultInjector::new(FaultConfig::access_faults(1e-2, 9));
        let bits = vec![false; 1_000_000];
        let flips = inj.corrupt_on_access(&bits).into_iter().filter(|&b| b).count();
        // Binomial(1e6, 1e-2): sigma = 99.5, 3 sigma ~ 300.
        assert!((flips as i64 - 10_000).abs() <= 300, "{flips}");
    }

    #[test]
    fn disabled_modes_never_draw() {
        let cfg = FaultConfig {
            p_gate: 1.0,
            p_input: 1.0,
            p_write: 1.0,
            ..FaultConfig::fault_free(5)
        };
        let mut inj = FaultInjector::new(cfg);
        let lanes = BitLine::ones(100);
        assert!(inj.gate_faults(&lanes).is_none());
        assert!(inj.write_faults(&lanes).is_none());
        assert_eq!(inj.corrupt_on_access(&[true, false]), vec![true, false]);
    }

    #[test]
    fn same_seed_same_trace() {
        let lanes = BitLine::ones(256);
        let run = |seed| {
            let mut inj = FaultInjector::new(FaultConfig::gate_faults(0.05, seed));
            (0..50).map(|_| inj.gate_faults(&lanes)).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, 0, 0);
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(8, 0, 0));
        assert_eq!(a, derive_seed(7, 0, 0));
    }

    #[test]
    fn suppression_skips_draws() {
        let mut inj = FaultInjector::new(FaultConfig::gate_faults(1.0, 1));
        inj.set_suppressed(true);
        assert!(inj.gate_faults(&BitLine::ones(8)).is_none());
        inj.set_suppressed(false);
        assert_eq!(inj.gate_faults(&BitLine::ones(8)).unwrap().count_ones(), 8);
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut cfg = FaultConfig::gate_faults(1.5, 0);
        assert!(cfg.validate().is_err());
        cfg.p_gate = 0.1;
        assert!(cfg.validate().is_ok());
        cfg.p_input = -0.1;
        assert!(cfg.validate().is_err());
    }
}
