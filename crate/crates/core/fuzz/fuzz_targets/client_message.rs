#![no_main]

use fracsim_core::protocol::{decode_client, encode_client};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(msg) = decode_client(text) {
        assert_eq!(decode_client(&encode_client(&msg)).unwrap(), msg);
    }
});
