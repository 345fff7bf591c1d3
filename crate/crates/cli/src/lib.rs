//! The `fas` command-line tool: seeded experiments over the channel-modeling core
//! with CSV/JSON output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod parse;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, resolve, FileConfig, Format, Params, Settings};
use crate::output::{write_json, write_rows, Meta};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or parameter values; nothing was computed.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fas_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use fas_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Core(e) => match e {
                E::Domain(_) => "domain",
                E::IllConditioned { .. } => "ill_conditioned",
                E::Unstable { .. } => "unstable",
                E::Numerical(_) => "numerical",
                E::NonFinite { .. } => "non_finite",
                E::Selection(_) => "selection",
            },
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "fas", version, about = "Fluid-antenna channel correlation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an AR model to the Clarke lags (fixed --p, or selection with --p-max).
    Fit(Params),
    /// Monte-Carlo order selection over 1..=p-max (default 40).
    SelectOrder(Params),
    /// Simulate AR realizations.
    Generate(Params),
    /// Selection-gain CDF: exact Monte-Carlo, AR direct Monte-Carlo and particle flow.
    Cdf(Params),
    /// Reconstruct one realization from sparse observations.
    Interpolate(Params),
    /// Minimum observation count: eigenvalue-tail bound against Monte-Carlo bisection.
    Bound(Params),
    /// NMSE table over port counts and selection strategies.
    Bench(Params),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::SelectOrder(_) => "select-order",
            Command::Generate(_) => "generate",
            Command::Cdf(_) => "cdf",
            Command::Interpolate(_) => "interpolate",
            Command::Bound(_) => "bound",
            Command::Bench(_) => "bench",
        }
    }

    fn params(&self) -> &Params {
        match self {
            Command::Fit(p)
            | Command::SelectOrder(p)
            | Command::Generate(p)
            | Command::Cdf(p)
            | Command::Interpolate(p)
            | Command::Bound(p)
            | Command::Bench(p) => p,
        }
    }
}

pub const GENERATE_HEADER: [&str; 4] = ["realization_id", "port_index", "re", "im"];
pub const CDF_HEADER: [&str; 7] = ["threshold", "f_exact_mc", "f_ar_direct_mc", "f_smc", "J", "seed", "f_smc_raw"];
pub const INTERPOLATE_HEADER: [&str; 10] = [
    "port_index",
    "observed",
    "truth_re",
    "truth_im",
    "oracle_re",
    "oracle_im",
    "oracle_var",
    "kalman_re",
    "kalman_im",
    "kalman_var",
];
pub const BENCH_HEADER: [&str; 9] =
    ["trial_id", "strategy", "N", "M", "sigma_v2", "nmse_kalman", "nmse_oracle", "l_max", "wall_time_us"];
pub const BOUND_HEADER: [&str; 4] = ["epsilon", "m_min_bound", "m_min_empirical_oracle", "m_min_empirical_kalman"];
pub const FIT_HEADER: [&str; 3] = ["k", "alpha_re", "alpha_im"];

/// Loads the config file named by `--config`, if any, and resolves all parameters.
pub fn load_settings(params: &Params) -> Result<Settings, CliError> {
    let file = match &params.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => FileConfig::default(),
    };
    resolve(params, &file)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("FAS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::usage(format!("FAS_THREADS must be a positive integer, got '{v}'")))?;
    // A second call in the same process finds the pool already built; the first setting stays.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(serde::Serialize)]
struct KRow {
    k: usize,
    alpha_re: f64,
    alpha_im: f64,
}

/// Runs `command` and writes its output to `out`.
pub fn execute(command: &Command, settings: &Settings, out: &mut dyn Write) -> Result<(), CliError> {
    let name = command.name();
    let meta = settings.meta.then(|| Meta::now(name, settings.seed));
    let meta = meta.as_ref();
    let table_format = settings.format.unwrap_or(Format::Csv);
    match command {
        Command::Fit(_) | Command::SelectOrder(_) => {
            let (_, report) = match command {
                Command::SelectOrder(_) => experiments::run_selection(settings, settings.p_max.unwrap_or(40))?,
                _ => experiments::run_fit(settings)?,
            };
            match settings.format.unwrap_or(Format::Json) {
                Format::Json => write_json(out, &report, meta),
                Format::Csv => {
                    let rows: Vec<KRow> = report
                        .alpha
                        .iter()
                        .enumerate()
                        .map(|(i, a)| KRow { k: i + 1, alpha_re: a[0], alpha_im: a[1] })
                        .collect();
                    write_rows(out, Format::Csv, &rows, &FIT_HEADER, meta)
                }
            }
        }
        Command::Generate(_) => write_rows(out, table_format, &experiments::run_generate(settings)?, &GENERATE_HEADER, meta),
        Command::Cdf(_) => write_rows(out, table_format, &experiments::run_cdf(settings)?, &CDF_HEADER, meta),
        Command::Interpolate(_) => {
            let run = experiments::run_interpolate(settings)?;
            match table_format {
                Format::Csv => write_rows(out, Format::Csv, &run.rows, &INTERPOLATE_HEADER, meta),
                Format::Json => write_json(out, &run, meta),
            }
        }
        Command::Bound(_) => write_rows(out, table_format, &experiments::run_bound(settings)?, &BOUND_HEADER, meta),
        Command::Bench(_) => write_rows(out, table_format, &experiments::run_bench(settings)?, &BENCH_HEADER, meta),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let settings = load_settings(cli.command.params())?;
    log::info!("{} with {:?}", cli.command.name(), settings);
    match &settings.out {
        Some(path) => {
            // Write to a buffer first so a failed run leaves no partial file behind.
            let mut buf = Vec::new();
            execute(&cli.command, &settings, &mut buf)?;
            let mut f = BufWriter::new(
                File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?,
            );
            f.write_all(&buf).and_then(|_| f.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            execute(&cli.command, &settings, &mut lock)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    eprintln!("{}", CliError::usage(e.render().to_string().trim()).to_json());
                    2
                }
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["fas", "fit", "--bogus"]), 2);
        assert_eq!(run(["fas"]), 2);
        assert_eq!(run(["fas", "interpolate", "--N", "100", "--M", "101", "--no-meta"]), 2);
        assert_eq!(run(["fas", "cdf", "--t-grid", "0:1:0"]), 2);
        assert_eq!(run(["fas", "fit", "--N", "100"]), 2);
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::from(fas_core::Error::Unstable { order: 3, max_modulus: 1.2 });
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "unstable");
        assert_eq!(v["error"]["exit_code"], 1);
    }

    fn settings(args: &[&str]) -> (Command, Settings) {
        let cli = Cli::try_parse_from(args).unwrap();
        let s = load_settings(cli.command.params()).unwrap();
        (cli.command, s)
    }

    fn csv_header(cmd: &Command, s: &Settings) -> String {
        let mut buf = Vec::new();
        execute(cmd, s, &mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().next().unwrap().to_string()
    }

    #[test]
    fn headers_match_rows() {
        let (c, s) = settings(&["fas", "bench", "--N", "30", "--trials", "2", "--no-meta"]);
        assert_eq!(csv_header(&c, &s), BENCH_HEADER.join(","));
        let (c, s) = settings(&["fas", "bench", "--N", "30", "--trials", "2", "--no-meta", "--format", "json"]);
        let mut buf = Vec::new();
        execute(&c, &s, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let keys: Vec<String> = v["rows"][0].as_object().unwrap().keys().cloned().collect();
        let mut want: Vec<String> = BENCH_HEADER.iter().map(|s| s.to_string()).collect();
        let mut got = keys;
        want.sort();
        got.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn fit_fixed_order_report() {
        let (c, s) = settings(&["fas", "fit", "--W", "2", "--N", "100", "--p", "1", "--no-meta"]);
        let mut buf = Vec::new();
        execute(&c, &s, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["p"], 1);
        assert_eq!(v["alpha"].as_array().unwrap().len(), 1);
        assert!(v.get("selection").is_none());
        assert!(v.get("meta").is_none());
    }
}
