#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::backend::wire::{decode_embedding_response, decode_label_response};

fuzz_target!(|data: &[u8]| {
    let _ = decode_label_response(data);
    if let Ok(values) = decode_embedding_response(data) {
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| v.is_finite()));
    }
});
