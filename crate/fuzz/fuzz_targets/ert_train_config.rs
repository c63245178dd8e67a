#![no_main]

use blinkline::ert::ErtTrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<ErtTrainConfig>(data) {
        let _ = cfg.validate();
    }
});
