#![no_main]

use fracsim_core::script::{expand_script, read_script, write_script};
use libfuzzer_sys::fuzz_target;

/// Longer scripts expand to more ticks than a fuzz iteration should hold.
const MAX_SECONDS: f64 = 5.0;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_script(data) else { return };
    if rows.last().is_some_and(|r| !(r.t <= MAX_SECONDS)) {
        return;
    }
    let Ok(ticks) = expand_script(&rows, 0.001) else { return };
    assert!(ticks.inputs.iter().all(|i| i.pose.is_finite()));
    let mut buf = Vec::new();
    write_script(&mut buf, &rows).unwrap();
    assert_eq!(read_script(buf.as_slice()).unwrap(), rows);
});
