#![no_main]

use libfuzzer_sys::fuzz_target;
use mpim_core::microcode::{parse_netlist, validate};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(prog) = parse_netlist(s) {
            let _ = validate(&prog);
            let again = parse_netlist(&prog.to_text()).expect("printed netlist must parse");
            assert_eq!(again, prog);
        }
    }
});
