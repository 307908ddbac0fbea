#![no_main]

use libfuzzer_sys::fuzz_target;

use capstream::config::RunConfig;

// Parsing and resolving an arbitrary config must never panic; malformed
// input has to surface as a field-named error.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(raw) = RunConfig::from_toml_str(text) {
            let _ = raw.resolve();
        }
    }
});
