#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::store::{encode_payload, HeadIndex};

fuzz_target!(|data: &[u8]| {
    if let Ok(head) = HeadIndex::parse(data) {
        let bytes = encode_payload(&head).expect("head serializes");
        assert_eq!(HeadIndex::parse(&bytes).expect("re-encoded head parses"), head);
    }
});
