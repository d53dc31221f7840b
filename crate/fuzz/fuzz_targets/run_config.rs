#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use scenetax::config::RunConfig;

// The first line is taken as a `--set` override, the rest as the file.
fuzz_target!(|text: &str| {
    let (first, rest) = text.split_once('\n').unwrap_or(("", text));
    let overrides: Vec<String> = if first.contains('=') { vec![first.to_string()] } else { Vec::new() };
    if let Ok(cfg) = RunConfig::parse(rest, Path::new("/base"), &overrides) {
        cfg.validate().expect("parsed configs are valid");
    }
});
