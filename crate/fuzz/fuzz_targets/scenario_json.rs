#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::io::from_json;
use nvnmr::scenario::{validate_config, ScenarioConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = from_json::<ScenarioConfig>(data) else {
        return;
    };
    let _ = validate_config(&cfg);
    let text = serde_json::to_vec(&cfg).unwrap();
    assert_eq!(from_json::<ScenarioConfig>(&text).unwrap(), cfg);
});
