// Mirrors the CLI `--set KEY=VALUE` path: split each line on the first `=`
// and apply it to a fresh raw config, then resolve. Applying may fail, that
// is fine; it must never panic or corrupt earlier fields.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut raw = bapkit::harness::RawConfig::default();
    for pair in text.lines() {
        let Some((key, value)) = pair.split_once('=') else {
            continue;
        };
        let _ = raw.apply(key.trim(), value.trim());
    }
    let _ = raw.resolve();
});
