#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = blinkline::runtime::parse_grid(data) {
        for cfg in grid {
            assert!(cfg.validate().is_ok());
            let capped = cfg.capped(4);
            assert!(capped.total_workers() <= 4);
            assert!(capped.validate().is_ok());
        }
    }
});
