#![no_main]

use libfuzzer_sys::fuzz_target;
use mpim_core::bits::BitMatrix;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = BitMatrix::parse_text(s) {
            assert_eq!(BitMatrix::parse_text(&m.to_text()).unwrap(), m);
        }
    }
});
