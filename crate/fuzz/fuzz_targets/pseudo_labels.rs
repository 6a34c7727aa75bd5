#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::PseudoLabelFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = text.parse::<PseudoLabelFile>() {
        let back: PseudoLabelFile = file.to_string().parse().unwrap();
        assert_eq!(back, file);
    }
});
