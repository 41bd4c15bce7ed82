#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::io::from_json;
use nvnmr::spin_bath::{Bath, BathConfig};
use nvnmr::Validate;

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = from_json::<BathConfig>(data) else {
        return;
    };
    if cfg.validate().is_err() || cfg.n_pairs > 64 {
        return;
    }
    let Ok(mut bath) = Bath::new(&cfg) else {
        return;
    };
    let fields = bath.advance(16);
    assert!(fields.iter().all(|b| b.is_finite()));
});
