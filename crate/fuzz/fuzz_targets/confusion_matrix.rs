#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::noise::ConfusionMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = text.parse::<ConfusionMatrix>() {
        let back: ConfusionMatrix = m.to_string().parse().unwrap();
        assert_eq!(back, m);
        let d = m.asymmetry();
        assert!(d.is_nan() || (0.0..=1.0).contains(&d));
    }
});
