//! Statistical oracles for the fault model and the analytic degradation
//! formulas. Each compares a sample mean to its expectation within 4 sigma.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use mpim_core::analytics::{per_batch_corruption, EccKind, EccResidualModel, NnModelParams};
use mpim_core::bits::BitLine;
use mpim_core::crossbar::{Crossbar, GateKind, GateStep, Orientation, Rect};
use mpim_core::fault::{FaultConfig, FaultInjector};

fn within(observed: f64, expected_p: f64, n: f64, sigmas: f64) -> bool {
    let sd = (expected_p * (1.0 - expected_p) / n).sqrt();
    (observed - expected_p).abs() <= sigmas * sd
}

#[test]
fn gate_fault_rate() {
    let p = 0.02;
    let n = 512;
    let mut x = Crossbar::new(n).unwrap();
    let mut faults = FaultInjector::new(FaultConfig::gate_faults(p, 11));
    let all = BitLine::ones(n);
    let steps = 40;
    let mut wrong = 0;
    for s in 0..steps {
        let out = 1 + s % (n - 1);
        x.apply_gate_step(&GateStep::init(Orientation::InRow, out, all.clone())).unwrap();
        x.apply_gate_step_with(&GateStep::gate(GateKind::Not, Orientation::InRow, vec![0], out, all.clone()), &mut faults)
            .unwrap();
        // Column 0 is all zeros, so a correct NOT writes 1.
        wrong += (0..n).filter(|&r| !x.get(r, out)).count();
    }
    let trials = (steps * n) as f64;
    assert!(within(wrong as f64 / trials, p, trials, 4.0), "{wrong} of {trials}");
    assert_eq!(faults.gate_fault_count(), wrong as u64);
}

#[test]
fn access_fault_rate() {
    let p = 0.05;
    let mut faults = FaultInjector::new(FaultConfig::access_faults(p, 12));
    let n = 4096;
    let lanes = BitLine::ones(n);
    let mut flips = 0;
    for _ in 0..10 {
        let mut line = BitLine::zeros(n);
        let here = faults.corrupt_line_on_access(&mut line, &lanes);
        assert_eq!(line.count_ones(), here);
        flips += here;
    }
    let trials = 10.0 * n as f64;
    assert!(within(flips as f64 / trials, p, trials, 4.0), "{flips}");
}

#[test]
fn drift_matches_odd_flip_probability() {
    let p: f64 = 0.01;
    let t = 25u64;
    let expected = 0.5 * (1.0 - (1.0 - 2.0 * p).powi(t as i32));
    let n = 128;
    let cfg = FaultConfig {
        p_drift: p,
        inject_indirect: true,
        ..FaultConfig::fault_free(13)
    };

    // One call of `t` units.
    let mut x = Crossbar::new(n).unwrap();
    let mut faults = FaultInjector::new(cfg);
    faults.apply_drift(&mut x, Rect::new(0, 0, n, n), t);
    let once = x.snapshot();
    let ones = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).filter(|&(r, c)| once.get(r, c)).count();
    let cells = (n * n) as f64;
    assert!(within(ones as f64 / cells, expected, cells, 4.0), "{ones}");

    // `t` calls of one unit reach the same distribution.
    let mut y = Crossbar::new(n).unwrap();
    let mut faults = FaultInjector::new(cfg.with_seed(14));
    for _ in 0..t {
        faults.apply_drift(&mut y, Rect::new(0, 0, n, n), 1);
    }
    let step = y.snapshot();
    let ones = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).filter(|&(r, c)| step.get(r, c)).count();
    assert!(within(ones as f64 / cells, expected, cells, 4.0), "{ones}");
}

/// Per-batch loss of one protected weight: it takes at least one flip and its
/// block takes at least two. Drawn as Binomial counts over the weight's bits
/// and the rest of the block.
#[test]
fn exact_residual_model_matches_binomial_sampling() {
    let params = NnModelParams {
        p_input: 3e-3,
        ..NnModelParams::default()
    };
    let bits = params.bits_per_weight as u64;
    let rest = (params.block_side as u64).pow(2) - bits;
    let in_weight = Binomial::new(bits, params.p_input).unwrap();
    let elsewhere = Binomial::new(rest, params.p_input).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let reps = 400_000;
    let lost = (0..reps)
        .filter(|_| {
            let w = in_weight.sample(&mut rng);
            w >= 1 && w + elsewhere.sample(&mut rng) >= 2
        })
        .count();
    let q = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::Exact);
    assert!(within(lost as f64 / reps as f64, q, reps as f64, 4.0), "{lost} vs q={q}");

    // The pair approximations bracket the exact value at small p.
    let pairs = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::Pairs);
    let intra = per_batch_corruption(&params, EccKind::Diagonal, EccResidualModel::PairsIntra);
    assert!(q < pairs && pairs < intra, "{q} {pairs} {intra}");
}

#[test]
fn unprotected_weight_loss_matches_binomial_sampling() {
    let params = NnModelParams {
        p_input: 1e-3,
        ..NnModelParams::default()
    };
    let in_weight = Binomial::new(params.bits_per_weight as u64, params.p_input).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let reps = 200_000;
    let lost = (0..reps).filter(|_| in_weight.sample(&mut rng) >= 1).count();
    let q = per_batch_corruption(&params, EccKind::None, EccResidualModel::Pairs);
    assert!(within(lost as f64 / reps as f64, q, reps as f64, 4.0), "{lost} vs q={q}");
}
