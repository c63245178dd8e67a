#![no_main]

use blinkline::facedet::DetectorModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = DetectorModel::from_json_slice(data) {
        let again = DetectorModel::from_json_slice(model.to_json().as_bytes()).unwrap();
        assert_eq!(again, model);
    }
});
