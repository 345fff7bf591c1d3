//! Replays the checked-in fuzz seeds through the parsers' invariants.

use std::path::Path;

use fas_cli::config::{parse_config, resolve, Params};
use fas_cli::parse::{parse_index_set, parse_list, parse_t_grid};
use fas_core::interpolation::ObservationSet;
use fas_core::Complex64;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| std::fs::read(f).unwrap()).collect()
}

#[test]
fn t_grid_seeds() {
    let mut ok = 0;
    for s in seeds("t_grid") {
        if let Ok(g) = parse_t_grid(std::str::from_utf8(&s).unwrap()) {
            let pts = g.linear_points().unwrap();
            assert!(pts.windows(2).all(|w| w[0] <= w[1]));
            ok += 1;
        }
    }
    assert!(ok >= 2);
}

#[test]
fn config_seeds_resolve() {
    for s in seeds("config") {
        let file = parse_config(std::str::from_utf8(&s).unwrap()).unwrap();
        resolve(&Params::default(), &file).unwrap();
    }
}

#[test]
fn list_seeds() {
    for s in seeds("list") {
        let text = std::str::from_utf8(&s).unwrap();
        let _ = parse_list::<usize>(text, "N");
        let _ = parse_list::<f64>(text, "epsilon");
    }
}

#[test]
fn observation_set_seeds() {
    let mut ok = 0;
    for s in seeds("observation_set") {
        let (&n, rest) = s.split_first().unwrap();
        let n = n as usize + 1;
        if let Ok(idx) = parse_index_set(std::str::from_utf8(rest).unwrap(), n) {
            let m = idx.len();
            ObservationSet::new(idx, vec![Complex64::new(0.0, 0.0); m], 0.0, n).unwrap();
            ok += 1;
        }
    }
    assert!(ok >= 2);
}
