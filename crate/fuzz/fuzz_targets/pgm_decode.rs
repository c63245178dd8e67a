#![no_main]

use blinkline::imgio::{decode_pgm, encode_pgm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_pgm(data) {
        let again = decode_pgm(&encode_pgm(&img)).expect("encoded image decodes");
        assert_eq!(again, img);
    }
});
