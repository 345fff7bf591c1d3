#![no_main]

use fas_cli::parse::parse_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_list::<usize>(text, "N") {
        assert_eq!(v.len(), text.split(',').count());
    }
    let _ = parse_list::<f64>(text, "epsilon");
});
