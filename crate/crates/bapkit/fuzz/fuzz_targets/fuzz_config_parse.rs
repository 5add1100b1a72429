// Config files come straight from users, so the parser must reject anything
// malformed with a config error instead of panicking. Resolution is included
// because validation runs arithmetic on parsed values.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = bapkit::harness::RawConfig::parse_str(text) {
        let _ = raw.resolve();
    }
});
