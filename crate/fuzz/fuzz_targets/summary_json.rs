#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::scenario::check_summary_schema;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = serde_json::from_slice::<serde_json::Value>(data) {
        let _ = check_summary_schema(&doc);
    }
});
