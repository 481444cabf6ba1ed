//! Observation files are untrusted input; parsing must never panic, and a
//! dataset that parses must satisfy the dataset invariants.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(dataset) = lrmc_core::io::parse_observations(text) {
            // Round trip: a parsed dataset reserializes and reparses to the
            // same entries.
            let again = lrmc_core::io::format_observations(&dataset, None);
            let back = lrmc_core::io::parse_observations(&again).expect("round trip");
            assert_eq!(back.entries(), dataset.entries());
        }
    }
});
