#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(name) = std::str::from_utf8(data) {
        if let Some(i) = blinkline::runtime::parse_frame_name(name) {
            assert_eq!(blinkline::runtime::parse_frame_name(&format!("frame_{i:06}.pgm")), Some(i));
        }
    }
});
