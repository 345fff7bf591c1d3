#![no_main]

use fas_cli::parse::parse_index_set;
use fas_core::interpolation::ObservationSet;
use fas_core::Complex64;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let n = n as usize + 1;
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(idx) = parse_index_set(text, n) {
        let m = idx.len();
        let obs = ObservationSet::new(idx, vec![Complex64::new(0.0, 0.0); m], 0.0, n)
            .expect("a parsed index set is a valid observation set");
        assert_eq!(obs.unobserved(n).len(), n - m);
    }
});
