#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = text.parse::<ExperimentConfig>() {
        let again: ExperimentConfig = cfg.canonical().parse().unwrap();
        assert_eq!(again.canonical(), cfg.canonical());
        assert_eq!(again.config_hash(), cfg.config_hash());
    }
});
