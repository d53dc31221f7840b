#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::manifest::{parse_manifest_line, read_manifest, write_manifest};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for (i, line) in text.lines().enumerate() {
            let _ = parse_manifest_line(line, i + 1);
        }
    }
    // Anything accepted must survive a write and re-read unchanged.
    if let Ok(m) = read_manifest(data) {
        let again = read_manifest(write_manifest(&m).as_bytes()).expect("rewritten manifest parses");
        assert_eq!(again, m);
    }
});
