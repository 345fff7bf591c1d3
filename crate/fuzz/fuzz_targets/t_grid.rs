#![no_main]

use fas_cli::parse::{parse_t_grid, GridSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_t_grid(text) {
        let GridSpec::Linear { start, stop, count } = grid else { panic!("linear spec parsed as quantile") };
        let pts = grid.linear_points().unwrap();
        assert_eq!(pts.len(), count);
        assert_eq!(pts[0], start);
        assert!(pts.iter().all(|t| t.is_finite() && *t >= 0.0 && *t <= stop));
        assert!(pts.windows(2).all(|w| w[0] <= w[1]));
    }
});
