#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::io::{read_timeseries_csv, write_timeseries_csv};
use nvnmr::spectral::periodogram;

fuzz_target!(|data: &[u8]| {
    let Ok(ts) = read_timeseries_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_timeseries_csv(&mut buf, &ts, "signal").unwrap();
    assert_eq!(read_timeseries_csv(buf.as_slice()).unwrap(), ts);
    if ts.len() <= 4096 {
        let spec = periodogram(&ts, 1);
        assert!(spec.power.iter().all(|p| p.is_finite() && *p >= 0.0));
    }
});
