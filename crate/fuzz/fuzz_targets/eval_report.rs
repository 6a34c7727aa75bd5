#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::EvalReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = text.parse::<EvalReport>() {
        let back: EvalReport = report.to_string().parse().unwrap();
        assert_eq!(back.matrix, report.matrix);
        assert_eq!(back.kind, report.kind);
    }
});
