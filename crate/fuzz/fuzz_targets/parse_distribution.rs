//! A distribution that parses must satisfy the invariants: full support,
//! strict positivity, unit mass.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(pi) = lrmc_core::io::parse_distribution(text) {
            assert!(pi.min_prob() > 0.0);
            let sum: f64 = pi.pmf().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
});
