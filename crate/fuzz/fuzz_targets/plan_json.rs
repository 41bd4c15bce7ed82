#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::io::from_json;
use nvnmr::sampling::SamplingPlan;
use nvnmr::Validate;

fuzz_target!(|data: &[u8]| {
    let Ok(plan) = from_json::<SamplingPlan>(data) else {
        return;
    };
    if plan.validate().is_err() {
        return;
    }
    let mid = 0.5 * (plan.f_low_hz + plan.f_high_hz);
    let folded = plan.alias(mid);
    assert!(folded >= 0.0 && folded <= 0.5 * plan.fs_hz);
    let _ = plan.unalias(folded);
});
