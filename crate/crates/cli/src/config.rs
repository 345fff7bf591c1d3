//! Experiment parameters: command-line flags layered over an optional TOML file over defaults.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fas_core::arfit::FitOptions;
use fas_core::generator::Initialization;
use fas_core::interpolation::Strategy;
use serde::Deserialize;

use crate::parse::{parse_list, parse_quantile_grid, parse_t_grid, validate_index_set, GridSpec, MAX_ITEMS};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Zero,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitArg {
    /// Reject ill-conditioned Yule-Walker systems.
    Strict,
    /// Diagonal loading down to the condition cap.
    Regularized,
}

/// Flags shared by every command. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Params {
    /// TOML file with default parameter values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Aperture in wavelengths.
    #[arg(long = "W")]
    pub w: Option<f64>,
    /// Port count; `bench` accepts a comma list.
    #[arg(long = "N")]
    pub n: Option<String>,
    /// Per-port channel variance.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Fixed AR order.
    #[arg(long)]
    pub p: Option<usize>,
    /// Largest AR order tried by order selection.
    #[arg(long = "p-max")]
    pub p_max: Option<usize>,
    /// Burn-in length as a multiple of N.
    #[arg(long)]
    pub burn: Option<usize>,
    /// Observation count.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Observation ratio M/N.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Port-selection strategy; `bench` accepts a comma list.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Explicit observed ports (1-based comma list), overriding the strategy.
    #[arg(long)]
    pub indices: Option<String>,
    /// Observation noise variance (0 selects the numerical floor).
    #[arg(long = "sigma-v2")]
    pub sigma_v2: Option<f64>,
    /// Particle count of the SMC estimator.
    #[arg(long = "J")]
    pub particles: Option<usize>,
    /// Resampling trigger ESS/J.
    #[arg(long = "ess-ratio")]
    pub ess_ratio: Option<f64>,
    /// Linear threshold grid start:stop:count.
    #[arg(long = "t-grid", conflicts_with = "t_quantile_grid")]
    pub t_grid: Option<String>,
    /// Threshold grid of this many quantiles of a pilot exact run.
    #[arg(long = "t-quantile-grid")]
    pub t_quantile_grid: Option<usize>,
    /// Pilot sample count for quantile grids.
    #[arg(long)]
    pub pilot: Option<usize>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Trials per configuration in `bench` and `bound`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Realizations emitted by `generate`.
    #[arg(long)]
    pub count: Option<usize>,
    /// NMSE targets for `bound` (comma list).
    #[arg(long)]
    pub epsilons: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial AR state before burn-in.
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Yule-Walker fitting mode.
    #[arg(long, value_enum)]
    pub fit: Option<FitArg>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Omit the timestamp header and wall-clock columns.
    #[arg(long = "no-meta")]
    pub no_meta: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Config-file schema; keys mirror the flag names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "W")]
    pub w: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<OneOrMany<usize>>,
    pub sigma2: Option<f64>,
    pub p: Option<usize>,
    pub p_max: Option<usize>,
    pub burn: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub ratio: Option<f64>,
    pub strategy: Option<OneOrMany<String>>,
    pub indices: Option<Vec<usize>>,
    pub sigma_v2: Option<f64>,
    #[serde(rename = "J")]
    pub particles: Option<usize>,
    pub ess_ratio: Option<f64>,
    pub t_grid: Option<String>,
    pub t_quantile_grid: Option<usize>,
    pub pilot: Option<usize>,
    pub mc: Option<usize>,
    pub trials: Option<usize>,
    pub count: Option<usize>,
    pub epsilons: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub init: Option<InitArg>,
    pub fit: Option<FitArg>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub no_meta: Option<bool>,
}

pub fn parse_config(text: &str) -> Result<FileConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::usage(format!("config: {}", e.message())))
}

/// Resolved parameters. Options that only some commands need stay optional.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub aperture: f64,
    pub ports: Vec<usize>,
    pub sigma2: f64,
    pub p: Option<usize>,
    pub p_max: Option<usize>,
    pub burn_factor: usize,
    pub m: Option<usize>,
    pub ratio: Option<f64>,
    pub strategies: Option<Vec<Strategy>>,
    pub indices: Option<Vec<usize>>,
    pub sigma_v2: f64,
    pub particles: usize,
    pub ess_ratio: f64,
    pub grid: GridSpec,
    pub pilot: usize,
    pub mc: usize,
    pub trials: usize,
    pub count: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    pub init: Initialization,
    pub fit: FitOptions,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub meta: bool,
}

impl Default for Settings {
    fn default() -> Self {
        resolve(&Params::default(), &FileConfig::default()).expect("defaults are valid")
    }
}

impl Settings {
    /// The single port count of commands that do not sweep N.
    pub fn single_n(&self) -> Result<usize, CliError> {
        match self.ports[..] {
            [n] => Ok(n),
            _ => Err(CliError::usage("this command takes a single --N value")),
        }
    }

    /// Order used for Kalman smoothing and simulation, capped at `N - 1`.
    pub fn ar_order(&self, n: usize) -> usize {
        self.p.unwrap_or(20).min(n - 1).max(1)
    }

    pub fn burn_in(&self, n: usize) -> usize {
        self.burn_factor * n
    }

    /// Observation count at `n` ports: `--M`, else `round(ratio · N)`, else `round(0.2 N)`.
    pub fn observations(&self, n: usize) -> usize {
        match (self.m, self.ratio) {
            (Some(m), _) => m,
            (None, Some(r)) => (r * n as f64).round() as usize,
            (None, None) => (0.2 * n as f64).round() as usize,
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}

fn positive(x: f64, what: &str) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::usage(format!("{what} must be a positive finite number, got {x}")))
    }
}

fn at_least(x: usize, min: usize, what: &str) -> Result<usize, CliError> {
    if (min..=MAX_ITEMS).contains(&x) {
        Ok(x)
    } else {
        Err(CliError::usage(format!("{what} must lie in [{min}, {MAX_ITEMS}], got {x}")))
    }
}

/// Merges flags over file values over defaults and checks every value's domain.
pub fn resolve(flags: &Params, file: &FileConfig) -> Result<Settings, CliError> {
    let aperture = positive(pick(&flags.w, &file.w).unwrap_or(2.0), "--W")?;
    let ports = match (&flags.n, &file.n) {
        (Some(text), _) => parse_list(text, "N")?,
        (None, Some(v)) => v.clone().into_vec(),
        (None, None) => vec![100],
    };
    if ports.is_empty() || ports.iter().any(|&n| !(2..=MAX_ITEMS).contains(&n)) {
        return Err(CliError::usage(format!("--N values must lie in [2, {MAX_ITEMS}]")));
    }
    let sigma2 = positive(pick(&flags.sigma2, &file.sigma2).unwrap_or(1.0), "--sigma2")?;
    let p = pick(&flags.p, &file.p).map(|p| at_least(p, 1, "--p")).transpose()?;
    let p_max = pick(&flags.p_max, &file.p_max).map(|p| at_least(p, 1, "--p-max")).transpose()?;
    let burn_factor = pick(&flags.burn, &file.burn).unwrap_or(5);
    if burn_factor > 1000 {
        return Err(CliError::usage("--burn must be <= 1000"));
    }
    let m = pick(&flags.m, &file.m).map(|m| at_least(m, 1, "--M")).transpose()?;
    let ratio = pick(&flags.ratio, &file.ratio);
    if let Some(r) = ratio {
        if !(r > 0.0 && r <= 1.0) {
            return Err(CliError::usage(format!("--ratio must lie in (0, 1], got {r}")));
        }
    }
    let strategies = match (&flags.strategy, &file.strategy) {
        (Some(text), _) => Some(parse_list::<String>(text, "strategy")?),
        (None, Some(v)) => Some(v.clone().into_vec()),
        (None, None) => None,
    }
    .map(|names| names.iter().map(|s| s.trim().parse::<Strategy>().map_err(|e| CliError::usage(e.to_string()))).collect())
    .transpose()?;
    if strategies.as_ref().is_some_and(|s: &Vec<Strategy>| s.is_empty()) {
        return Err(CliError::usage("empty strategy list"));
    }
    let indices = match (&flags.indices, &file.indices) {
        (Some(text), _) => Some(parse_list(text, "port index")?),
        (None, Some(v)) => Some(v.clone()),
        (None, None) => None,
    };
    let sigma_v2 = pick(&flags.sigma_v2, &file.sigma_v2).unwrap_or(0.0);
    if !(sigma_v2.is_finite() && sigma_v2 >= 0.0) {
        return Err(CliError::usage(format!("--sigma-v2 must be >= 0, got {sigma_v2}")));
    }
    let particles = at_least(pick(&flags.particles, &file.particles).unwrap_or(1000), 100, "--J")?;
    let ess_ratio = pick(&flags.ess_ratio, &file.ess_ratio).unwrap_or(0.5);
    if !(ess_ratio > 0.0 && ess_ratio <= 1.0) {
        return Err(CliError::usage(format!("--ess-ratio must lie in (0, 1], got {ess_ratio}")));
    }
    let grid = match (&flags.t_grid, flags.t_quantile_grid) {
        (Some(g), _) => parse_t_grid(g)?,
        (None, Some(c)) => parse_quantile_grid(c)?,
        (None, None) => match (&file.t_grid, file.t_quantile_grid) {
            (Some(_), Some(_)) => return Err(CliError::usage("config sets both t_grid and t_quantile_grid")),
            (Some(g), None) => parse_t_grid(g)?,
            (None, Some(c)) => parse_quantile_grid(c)?,
            (None, None) => GridSpec::Quantile { count: 40 },
        },
    };
    let pilot = at_least(pick(&flags.pilot, &file.pilot).unwrap_or(10_000), 1, "--pilot")?;
    let mc = at_least(pick(&flags.mc, &file.mc).unwrap_or(30_000), 1, "--mc")?;
    let trials = at_least(pick(&flags.trials, &file.trials).unwrap_or(200), 1, "--trials")?;
    let count = at_least(pick(&flags.count, &file.count).unwrap_or(1), 1, "--count")?;
    let epsilons = match (&flags.epsilons, &file.epsilons) {
        (Some(text), _) => parse_list(text, "epsilon")?,
        (None, Some(v)) => v.clone(),
        (None, None) => vec![0.1, 0.01, 0.001],
    };
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(CliError::usage("epsilons must lie in [0, 1]"));
    }
    let seed = pick(&flags.seed, &file.seed).unwrap_or(1);
    let init = match pick(&flags.init, &file.init).unwrap_or(InitArg::Stationary) {
        InitArg::Zero => Initialization::Zero,
        InitArg::Stationary => Initialization::Stationary,
    };
    let fit = match pick(&flags.fit, &file.fit).unwrap_or(FitArg::Regularized) {
        FitArg::Strict => FitOptions::default(),
        FitArg::Regularized => FitOptions::regularized(),
    };
    Ok(Settings {
        aperture,
        ports,
        sigma2,
        p,
        p_max,
        burn_factor,
        m,
        ratio,
        strategies,
        indices,
        sigma_v2,
        particles,
        ess_ratio,
        grid,
        pilot,
        mc,
        trials,
        count,
        epsilons,
        seed,
        init,
        fit,
        out: pick(&flags.out, &file.out),
        format: pick(&flags.format, &file.format),
        meta: !(flags.no_meta || file.no_meta.unwrap_or(false)),
    })
}

/// Checks an explicit index set against the single port count.
pub fn checked_indices(settings: &Settings, n: usize) -> Result<Option<Vec<usize>>, CliError> {
    match &settings.indices {
        Some(idx) => {
            validate_index_set(idx, n)?;
            Ok(Some(idx.clone()))
        }
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file = parse_config("W = 5.0\nN = 200\nseed = 9\nstrategy = \"random\"").unwrap();
        let flags = Params { seed: Some(3), ..Params::default() };
        let s = resolve(&flags, &file).unwrap();
        assert_eq!(s.aperture, 5.0);
        assert_eq!(s.ports, vec![200]);
        assert_eq!(s.seed, 3);
        assert_eq!(s.strategies, Some(vec![Strategy::Random]));
        assert_eq!(s.sigma2, 1.0);
        assert_eq!(s.init, Initialization::Stationary);
        assert!(s.meta);
    }

    #[test]
    fn file_lists_and_enums() {
        let file = parse_config("N = [50, 100]\nstrategy = [\"random\", \"uniform_interior\"]\ninit = \"zero\"\nfit = \"strict\"\nformat = \"json\"\nno_meta = true").unwrap();
        let s = resolve(&Params::default(), &file).unwrap();
        assert_eq!(s.ports, vec![50, 100]);
        assert_eq!(s.init, Initialization::Zero);
        assert_eq!(s.fit, FitOptions::default());
        assert_eq!(s.format, Some(Format::Json));
        assert!(!s.meta);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("W = \"five\"").is_err());
        let bad = |f: Params| resolve(&f, &FileConfig::default()).is_err();
        assert!(bad(Params { w: Some(-1.0), ..Params::default() }));
        assert!(bad(Params { n: Some("1".into()), ..Params::default() }));
        assert!(bad(Params { particles: Some(10), ..Params::default() }));
        assert!(bad(Params { ess_ratio: Some(0.0), ..Params::default() }));
        assert!(bad(Params { strategy: Some("grid".into()), ..Params::default() }));
        assert!(bad(Params { t_grid: Some("0:1:0".into()), ..Params::default() }));
        assert!(bad(Params { epsilons: Some("2".into()), ..Params::default() }));
        assert!(bad(Params { sigma_v2: Some(-1e-3), ..Params::default() }));
    }

    #[test]
    fn observation_count_rules() {
        let mut s = Settings::default();
        assert_eq!(s.observations(100), 20);
        s.ratio = Some(0.25);
        assert_eq!(s.observations(100), 25);
        s.m = Some(7);
        assert_eq!(s.observations(100), 7);
        assert_eq!(s.ar_order(10), 9);
    }
}
