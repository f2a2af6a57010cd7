#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((z, s)) = casimir_grating::io::parse_dataset_csv(data) {
        assert_eq!(z.len(), s.len());
        assert!(z.windows(2).all(|w| w[1] > w[0]));
    }
});
