use std::path::PathBuf;
use std::process::{Command, Output};

fn fas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fas")).args(args).output().expect("fas runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fas-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn fit_fixed_order() {
    let o = fas(&["fit", "--W", "2", "--N", "100", "--p", "1", "--no-meta"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["alpha"].as_array().unwrap().len(), 1);
    assert_eq!(v["root_moduli"].as_array().unwrap().len(), 1);
    assert!(v["sigma_eps2"].as_f64().unwrap() > 0.0);
}

#[test]
fn malformed_flag_is_usage_error() {
    let o = fas(&["fit", "--W"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["kind"], "usage");
    assert_eq!(fas(&["interpolate", "--N", "100", "--M", "101"]).status.code(), Some(2));
    assert_eq!(fas(&["cdf", "--t-grid", "1:0:3"]).status.code(), Some(2));
    assert_eq!(fas(&["bench", "--strategy", "everywhere"]).status.code(), Some(2));
    assert_eq!(fas(&["fit", "--config", "/nonexistent/fas.toml", "--p", "2"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_one() {
    // The strict fit refuses the ill-conditioned high-order Clarke system.
    let o = fas(&["fit", "--W", "5", "--N", "200", "--p", "30", "--fit", "strict"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"]["kind"], "ill_conditioned");
}

#[test]
fn bad_thread_cap_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_fas"))
        .args(["fit", "--p", "2"])
        .env("FAS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_fas"))
        .args(["fit", "--p", "2", "--no-meta"])
        .env("FAS_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn config_file_and_flag_precedence() {
    let cfg = temp("precedence.toml");
    std::fs::write(&cfg, "W = 2.0\nN = 60\np = 3\nformat = \"json\"\n").unwrap();
    let o = fas(&["fit", "--config", cfg.to_str().unwrap(), "--p", "4", "--no-meta"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p"], 4);
    assert_eq!(v["N"], 60);
    std::fs::write(&cfg, "W = 2.0\nunknown_key = 1\n").unwrap();
    assert_eq!(fas(&["fit", "--config", cfg.to_str().unwrap(), "--p", "4"]).status.code(), Some(2));
}

#[test]
fn interpolate_rows_per_port() {
    let o = fas(&["interpolate", "--W", "2", "--N", "100", "--M", "10", "--strategy", "uniform_endpoints", "--seed", "7", "--no-meta"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), fas_cli::INTERPOLATE_HEADER.join(","));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 100);
    assert_eq!(rows.iter().filter(|r| r[1] == 1.0).count(), 10);
    for r in rows.iter().filter(|r| r[1] == 1.0) {
        // Noise-floored observations are reproduced.
        assert!((r[4] - r[2]).abs() < 1e-3 && (r[5] - r[3]).abs() < 1e-3);
        assert!(r[6] < 1e-8);
    }
    assert!(rows.iter().all(|r| r[6] >= 0.0 && r[9] >= 0.0));
}

#[test]
fn bound_columns_and_rows() {
    let o = fas(&["bound", "--W", "2", "--N", "100", "--trials", "100", "--epsilons", "1,0.1,0.01", "--no-meta"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,m_min_bound,m_min_empirical_oracle,m_min_empirical_kalman");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows[0][1], 0.0);
    for r in &rows {
        assert!(r[1] <= r[2] && r[1] <= r[3], "{r:?}");
    }
}

#[test]
fn bench_table_shape() {
    let o = fas(&["bench", "--ratio", "0.2", "--N", "50,100", "--trials", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# fas bench"));
    assert_eq!(lines.next().unwrap(), fas_cli::BENCH_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 3 * 5);
    assert!(rows.iter().all(|r| !r.ends_with(',')), "wall times present with meta");
    let o = fas(&["bench", "--N", "50", "--trials", "2", "--no-meta"]);
    assert!(stdout(&o).lines().skip(1).all(|r| r.ends_with(',')));
}

#[test]
fn cdf_grid_and_file_output() {
    let out = temp("cdf.csv");
    let o = fas(&["cdf", "--N", "30", "--p", "5", "--mc", "2000", "--J", "200", "--t-grid", "0:6:4", "--out", out.to_str().unwrap(), "--no-meta"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], fas_cli::CDF_HEADER.join(","));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.0,0.0,0.0,0.0,200,1,"));
    assert_eq!(fas(&["cdf", "--t-grid", "0:1:0"]).status.code(), Some(2));
}

#[test]
fn generate_layout() {
    let o = fas(&["generate", "--N", "8", "--p", "3", "--count", "2", "--no-meta", "--init", "zero"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "realization_id,port_index,re,im");
    assert_eq!(lines.len(), 17);
    assert!(lines[9].starts_with("1,1,"));
}
