//! Replays the checked-in fuzz corpus through the parser and decoder entry
//! points, so seeds stay meaningful without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use mpim_cli::config::parse_config;
use mpim_core::bits::BitMatrix;
use mpim_core::crossbar::{Crossbar, Rect};
use mpim_core::ecc::{BankMode, BlockGeometry, EccCostModel, ParityBanks};
use mpim_core::microcode::parse_netlist;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn netlist_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_netlist") {
        if let Ok(prog) = parse_netlist(std::str::from_utf8(&data).unwrap()) {
            assert_eq!(parse_netlist(&prog.to_text()).unwrap(), prog, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn config_seeds() {
    let results: Vec<bool> = seeds("parse_config")
        .iter()
        .map(|(_, d)| parse_config(std::str::from_utf8(d).unwrap()).is_ok())
        .collect();
    assert!(results.contains(&true) && results.contains(&false));
}

#[test]
fn bitmatrix_seeds() {
    for (name, data) in seeds("parse_bitmatrix") {
        if let Ok(m) = BitMatrix::parse_text(std::str::from_utf8(&data).unwrap()) {
            assert_eq!(BitMatrix::parse_text(&m.to_text()).unwrap(), m, "{name}");
        }
    }
}

/// Same decoding as the `ecc_decode` fuzz target.
fn ecc_decode(data: &[u8]) {
    const N: usize = 32;
    if data.len() < 1 + N * N / 8 {
        return;
    }
    let m = [2, 4, 8, 16, 32][(data[0] & 7) as usize % 5];
    let mode = if data[0] & 8 == 0 { BankMode::Three } else { BankMode::Two };
    let bits = &data[1..1 + N * N / 8];
    let contents = BitMatrix::from_fn(N, N, |r, c| (bits[(r * N + c) / 8] >> (c % 8)) & 1 == 1);
    let mut x = Crossbar::new(N).unwrap();
    x.load(&contents).unwrap();
    let mut banks = ParityBanks::encode(&x, BlockGeometry::new(N, m).unwrap(), mode).unwrap();
    let flips: Vec<(usize, usize)> =
        data[1 + N * N / 8..].chunks_exact(2).map(|p| (p[0] as usize % N, p[1] as usize % N)).collect();
    for &(r, c) in &flips {
        x.flip_cell(r, c);
    }
    let report = banks.verify_and_correct(&mut x, Rect::new(0, 0, N, N), &EccCostModel::default());
    if flips.len() == 1 && mode == BankMode::Three {
        assert_eq!(report.corrected(), flips);
        assert_eq!(x.snapshot(), contents);
    }
}

#[test]
fn ecc_decode_seeds() {
    for (_, data) in seeds("ecc_decode") {
        ecc_decode(&data);
    }
    // Every block side with a single flip.
    for side in 0..5u8 {
        for cell in [(0u8, 0u8), (31, 31), (5, 17)] {
            let mut d = vec![side];
            d.extend((0..128).map(|i: u8| i.wrapping_mul(37)));
            d.extend([cell.0, cell.1]);
            ecc_decode(&d);
        }
    }
}
