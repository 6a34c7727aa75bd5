#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::MetricsLog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = text.parse::<MetricsLog>() {
        // printing rounds to six decimals, so only the shape must survive
        let back: MetricsLog = log.to_csv().parse().unwrap();
        assert_eq!(back.len(), log.len());
    }
});
