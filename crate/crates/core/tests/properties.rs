use proptest::prelude::*;

use mpim_core::analytics::{nn_failure_probability, wilson_interval, NnModelParams, Z95};
use mpim_core::bits::{BitLine, BitMatrix};
use mpim_core::crossbar::{Crossbar, GateKind, GateStep, Orientation, Rect};
use mpim_core::ecc::{BankMode, BlockGeometry, EccCostModel, ParityBanks};
use mpim_core::fault::NoFaults;
use mpim_core::microcode::{self, build_multiplier, parse_netlist};
use mpim_core::tmr::{per_bit_vote, vote_per_element_reference};

fn matrix(n: usize) -> impl Strategy<Value = BitMatrix> {
    proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| BitMatrix::from_fn(n, n, |r, c| bits[r * n + c]))
}

fn orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::InRow), Just(Orientation::InColumn)]
}

/// A gate or INIT step with distinct offsets on a side-`n` crossbar.
fn step(n: usize) -> impl Strategy<Value = GateStep> {
    (
        orientation(),
        proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 4).prop_shuffle(),
        proptest::sample::select(GateKind::ALL.to_vec()),
        proptest::collection::vec(any::<bool>(), n),
        any::<bool>(),
    )
        .prop_map(move |(o, offsets, gate, lanes, init)| {
            let lanes = BitLine::from_bools(&lanes);
            if init {
                GateStep::init(o, offsets[3], lanes)
            } else {
                GateStep::gate(gate, o, offsets[..gate.arity()].to_vec(), offsets[3], lanes)
            }
        })
}

fn crossbar(m: &BitMatrix) -> Crossbar {
    let mut x = Crossbar::new(m.rows()).unwrap();
    x.load(m).unwrap();
    x
}

proptest! {
    #[test]
    fn parallel_step_equals_per_lane_steps(m in matrix(16), s in step(16)) {
        let mut par = crossbar(&m);
        let mut seq = par.clone();
        par.apply_gate_step(&s).unwrap();
        for lane in s.lanes.iter_ones() {
            let one = GateStep { lanes: BitLine::from_indices(16, [lane]), ..s.clone() };
            seq.apply_gate_step(&one).unwrap();
        }
        prop_assert_eq!(par.snapshot(), seq.snapshot());
        prop_assert_eq!(par.cycles(), 1);
    }

    #[test]
    fn orientation_symmetry(m in matrix(12), s in step(12)) {
        let mut a = crossbar(&m);
        let mut b = crossbar(&m.transpose());
        a.apply_gate_step(&s).unwrap();
        let t = GateStep { orientation: s.orientation.transposed(), ..s.clone() };
        b.apply_gate_step(&t).unwrap();
        prop_assert_eq!(a.snapshot(), b.snapshot().transpose());
    }

    #[test]
    fn ecc_banks_track_any_step_sequence(
        m in matrix(32),
        steps in proptest::collection::vec(step(32), 1..40),
        three in any::<bool>(),
    ) {
        let mode = if three { BankMode::Three } else { BankMode::Two };
        let geom = BlockGeometry::new(32, 8).unwrap();
        let cost = EccCostModel::default();
        let mut x = crossbar(&m);
        let mut by_step = ParityBanks::encode(&x, geom, mode).unwrap();
        let mut by_cell = by_step.clone();
        for s in &steps {
            let ch = x.apply_gate_step(s).unwrap();
            by_step.update_step(&ch, &cost);
            let cells: Vec<_> = ch.cells().collect();
            by_cell.update_incremental(&cells, &cost).unwrap();
        }
        let fresh = ParityBanks::encode(&x, geom, mode).unwrap();
        prop_assert_eq!(&by_step, &fresh);
        prop_assert_eq!(&by_cell, &fresh);
    }

    #[test]
    fn any_single_flip_is_corrected(
        m in matrix(32),
        side in prop_oneof![Just(4usize), Just(8), Just(16), Just(32)],
        r in 0usize..32,
        c in 0usize..32,
    ) {
        let mut x = crossbar(&m);
        let geom = BlockGeometry::new(32, side).unwrap();
        let mut banks = ParityBanks::encode(&x, geom, BankMode::Three).unwrap();
        x.flip_cell(r, c);
        let rep = banks.verify_and_correct(&mut x, Rect::new(0, 0, 32, 32), &EccCostModel::default());
        prop_assert_eq!(rep.corrected(), vec![(r, c)]);
        prop_assert_eq!(x.snapshot(), m);
    }

    #[test]
    fn netlist_text_round_trips(w in 1usize..=8, o in orientation()) {
        let prog = build_multiplier(w).unwrap().with_orientation(o);
        let parsed = parse_netlist(&prog.to_text()).unwrap();
        prop_assert_eq!(parsed, prog);
    }

    #[test]
    fn netlist_parser_never_panics(text in "(PROGRAM|INPUT|OUTPUT|STEP|INIT|NOR2|in-row|in=|out=|[0-9,= \n#])*") {
        let _ = parse_netlist(&text);
    }

    #[test]
    fn bitmatrix_text_round_trips(m in matrix(9)) {
        prop_assert_eq!(BitMatrix::parse_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn multiplier_matches_integer_product(w in 1usize..=16, seed in any::<u64>()) {
        let prog = build_multiplier(w).unwrap();
        let mask = (1u64 << w) - 1;
        let values: Vec<Vec<u64>> = (0..8u64)
            .map(|i| {
                let h = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(i as u32 * 7);
                vec![h & mask, (h >> 32) & mask]
            })
            .collect();
        let n = prog.span().max(8);
        let mut x = Crossbar::new(n).unwrap();
        let lanes = BitLine::range(n, 0, 8);
        microcode::load_inputs(&prog, &mut x, 0, &lanes, &values).unwrap();
        let r = microcode::execute(&prog, &mut x, 0, &lanes, &mut NoFaults).unwrap();
        for (v, o) in values.iter().zip(&r.outputs) {
            prop_assert_eq!(*o, v[0] * v[1]);
        }
    }

    #[test]
    fn per_bit_vote_dominates(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let v = per_bit_vote(a, b, c);
        for k in 0..64 {
            let ones = ((a >> k) & 1) + ((b >> k) & 1) + ((c >> k) & 1);
            prop_assert_eq!((v >> k) & 1, (ones >= 2) as u64);
        }
        if let Some(e) = vote_per_element_reference(a, b, c) {
            prop_assert_eq!(v, e);
        }
        prop_assert_eq!(per_bit_vote(a, a, c), a);
    }

    #[test]
    fn wilson_brackets_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((trials as f64) * frac) as u64;
        let (lo, hi) = wilson_interval(k, trials, Z95);
        let p = k as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn nn_probability_monotone(p1 in 0.0f64..1e-3, p2 in 0.0f64..1e-3) {
        let params = NnModelParams::default();
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let (a, b) = (nn_failure_probability(&params, lo), nn_failure_probability(&params, hi));
        prop_assert!(a <= b && (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
    }
}
