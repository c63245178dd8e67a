#![no_main]

use blinkline::ert::TrainingManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = TrainingManifest::from_json_slice(data);
});
