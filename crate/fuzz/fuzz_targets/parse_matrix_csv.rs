#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(matrix) = lrmc_core::io::parse_matrix_csv(text) {
            assert!(matrix.iter().all(|v| v.is_finite()));
            let again = lrmc_core::io::format_matrix_csv(&matrix, None);
            let back = lrmc_core::io::parse_matrix_csv(&again).expect("round trip");
            assert_eq!(back, matrix);
        }
    }
});
