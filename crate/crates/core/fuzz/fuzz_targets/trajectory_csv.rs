#![no_main]

use fracsim_core::trajectory::read_trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_trajectory(data) {
        assert!(records.windows(2).all(|w| w[0].t < w[1].t));
        for r in &records {
            let _ = r.to_sample();
        }
    }
});
