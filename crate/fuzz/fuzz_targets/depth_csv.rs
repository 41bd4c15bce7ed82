#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::diffusion::{fit_diffusion, DiffusionFitOptions};
use nvnmr::io::{read_depth_csv, write_depth_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(points) = read_depth_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_depth_csv(&mut buf, &points).unwrap();
    assert_eq!(read_depth_csv(buf.as_slice()).unwrap(), points);
    let opts = DiffusionFitOptions {
        bootstrap_resamples: 20,
        ..Default::default()
    };
    if let Ok(fit) = fit_diffusion(&points, &opts) {
        assert!(fit.ci_low <= fit.ci_high);
    }
});
