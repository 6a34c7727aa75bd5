#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::svhn;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = svhn::parse(data) {
        raw.check().unwrap();
        assert!(raw.labels.iter().all(|&l| l < 10));
    }
});
