#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::triage::TriageState;

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = serde_json::from_slice::<TriageState>(data) {
        let _ = state.relabel_count();
        let bytes = serde_json::to_vec(&state).expect("state serializes");
        let _: TriageState = serde_json::from_slice(&bytes).expect("state round trips");
    }
});
