#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::usps;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(raw) = usps::parse(text) {
            raw.check().unwrap();
        }
    }
});
