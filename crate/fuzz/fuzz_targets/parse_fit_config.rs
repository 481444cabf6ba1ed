#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = lrmc_core::io::parse_fit_config(text) {
            // Accepted configs carry a known mode and sane numbers.
            assert!(matches!(
                cfg.lambda_mode.as_str(),
                "explicit" | "theorem" | "optimal" | "calibrated"
            ));
            if let Some(l) = cfg.lambda {
                assert!(l > 0.0 && l.is_finite());
            }
        }
    }
});
