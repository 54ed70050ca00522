#![no_main]

use libfuzzer_sys::fuzz_target;

// First 0xFF byte splits the input into a config document and one
// --set style override; both come from the user.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0xff).unwrap_or(data.len());
    let (doc, rest) = data.split_at(split);
    let over = rest.get(1..).unwrap_or(&[]);
    if let (Ok(doc), Ok(over)) = (std::str::from_utf8(doc), std::str::from_utf8(over)) {
        let overrides: Vec<String> = if over.is_empty() { vec![] } else { vec![over.into()] };
        let _ = zappa::config::RunConfig::from_toml_with_overrides(doc, &overrides);
    }
});
