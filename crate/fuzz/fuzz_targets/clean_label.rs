#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::text::{clean_label, split_labels, CleanupPolicy};

fuzz_target!(|raw: &str| {
    let default = CleanupPolicy::default();
    for label in split_labels(raw) {
        if let Ok(clean) = clean_label(&label, &default) {
            assert!(!clean.is_empty());
            assert!(clean.split(' ').count() <= 2);
            assert!(clean.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b' '));
            assert_eq!(clean_label(&clean, &default).as_deref(), Ok(clean.as_str()));
        }
        let _ = clean_label(&label, &CleanupPolicy::minimal());
    }
});
