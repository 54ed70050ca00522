#![no_main]

use libfuzzer_sys::fuzz_target;
use zappa::rational::{parse_rational, rat_to_string};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = parse_rational(text) {
            // Anything accepted must round-trip through its text form.
            let again = parse_rational(&rat_to_string(&r)).expect("round trip");
            assert_eq!(r, again);
        }
    }
});
