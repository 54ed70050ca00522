#![no_main]

use libfuzzer_sys::fuzz_target;

// The config parser is the one surface that consumes untrusted text; it
// must reject garbage with an error, never a panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = zappa::config::RunConfig::from_toml_str(text);
    }
});
