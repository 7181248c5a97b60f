#![no_main]

//! Input: byte 0 picks the block side and bank count, the next 128 bytes
//! fill a 32x32 crossbar, and each remaining byte pair is a cell to flip
//! after encoding. Decoding must never panic, and with three banks a single
//! flip must be corrected exactly.

use libfuzzer_sys::fuzz_target;
use mpim_core::bits::BitMatrix;
use mpim_core::crossbar::{Crossbar, Rect};
use mpim_core::ecc::{BankMode, BlockGeometry, EccCostModel, ParityBanks};

const N: usize = 32;

fuzz_target!(|data: &[u8]| {
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
    let flips: Vec<(usize, usize)> = data[1 + N * N / 8..]
        .chunks_exact(2)
        .map(|p| (p[0] as usize % N, p[1] as usize % N))
        .collect();
    for &(r, c) in &flips {
        x.flip_cell(r, c);
    }
    let report = banks.verify_and_correct(&mut x, Rect::new(0, 0, N, N), &EccCostModel::default());
    if flips.len() == 1 && mode == BankMode::Three {
        assert_eq!(report.corrected(), flips);
        assert_eq!(x.snapshot(), contents);
    }
});
