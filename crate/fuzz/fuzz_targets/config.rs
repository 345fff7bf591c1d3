#![no_main]

use fas_cli::config::{parse_config, resolve, Params};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_config(text) {
        if let Ok(s) = resolve(&Params::default(), &file) {
            assert!(!s.ports.is_empty() && s.ports.iter().all(|&n| n >= 2));
            assert!(s.aperture > 0.0 && s.sigma2 > 0.0);
            assert!(s.ess_ratio > 0.0 && s.ess_ratio <= 1.0);
            assert!(s.epsilons.iter().all(|e| (0.0..=1.0).contains(e)));
        }
    }
});
