#![no_main]

use libfuzzer_sys::fuzz_target;
use plr_core::formats::idx;

fuzz_target!(|data: &[u8]| {
    if let Ok(array) = idx::parse(data) {
        assert_eq!(array.data.len(), array.dims.iter().product::<usize>());
    }
});
