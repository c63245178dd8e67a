#![no_main]

use blinkline::blink::read_csv_from;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_csv_from(data);
    // same bytes split across reads
    let _ = read_csv_from(std::io::Read::chain(&data[..data.len() / 2], &data[data.len() / 2..]));
});
