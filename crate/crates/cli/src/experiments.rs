//! Experiment runners behind the commands. Each is a pure function of its settings.

use std::collections::HashMap;
use std::time::Instant;

use fas_core::arfit::{
    check_stability, clarke_lags, select_order, yule_walker_fit_with, ArpModel, OrderSelectionConfig,
};
use fas_core::correlation::{
    build_covariance, eigen_spectrum, sample_exact, sample_exact_max_gain, ClarkeModel, EigenSpectrum,
    ToeplitzCovariance,
};
use fas_core::generator::{simulate_batch, simulate_max_gain_batch, SimulationConfig};
use fas_core::interpolation::{
    build_state_space, dense_mmse, kalman_smooth, matched_state_covariance, max_gap, min_observations_bound, nmse,
    port_select, ObservationSet, StateSpace, Strategy,
};
use fas_core::rng::{complex_normal, derive_seed, stream};
use fas_core::selection_gain::{empirical_cdf_from_gains, smc_cdf, SmcConfig};
use fas_core::stats::mean_and_stderr;
use fas_core::Complex64;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Settings;
use crate::parse::GridSpec;
use crate::CliError;

/// Exact Clarke channel at one port count.
pub struct Channel {
    pub model: ClarkeModel,
    pub cov: ToeplitzCovariance,
    pub spectrum: EigenSpectrum,
}

impl Channel {
    pub fn new(aperture: f64, n: usize, sigma2: f64) -> Result<Self, CliError> {
        let model = ClarkeModel::new(aperture, n, sigma2)?;
        let cov = build_covariance(&model);
        let spectrum = eigen_spectrum(&cov)?;
        Ok(Self { model, cov, spectrum })
    }

    pub fn from_settings(s: &Settings, n: usize) -> Result<Self, CliError> {
        Self::new(s.aperture, n, s.sigma2)
    }
}

/// Fitted AR model together with its smoother state space.
pub struct Smoother {
    pub model: ArpModel,
    pub ss: StateSpace,
    pub p_inf: DMatrix<Complex64>,
}

impl Smoother {
    pub fn new(model: ArpModel) -> Result<Self, CliError> {
        let ss = build_state_space(&model)?;
        let p_inf = matched_state_covariance(&model);
        Ok(Self { model, ss, p_inf })
    }
}

pub fn fit_order(s: &Settings, channel: &Channel, p: usize) -> Result<ArpModel, CliError> {
    Ok(yule_walker_fit_with(&clarke_lags(&channel.model, p)?, &s.fit)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub p: usize,
    pub d: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedRow {
    pub p: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionTable {
    pub p_star: usize,
    pub d_min: f64,
    pub mc_samples: usize,
    pub d: Vec<DistanceRow>,
    pub excluded: Vec<ExcludedRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    #[serde(rename = "W")]
    pub aperture: f64,
    #[serde(rename = "N")]
    pub ports: usize,
    pub p: usize,
    /// `(re, im)` pairs.
    pub alpha: Vec<[f64; 2]>,
    pub sigma_eps2: f64,
    /// Diagonal loading applied to `r(0)` by the regularized fit.
    pub ridge: f64,
    pub stable: bool,
    pub root_moduli: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionTable>,
}

impl FitReport {
    fn new(s: &Settings, n: usize, model: &ArpModel, selection: Option<SelectionTable>) -> Self {
        let report = check_stability(model);
        Self {
            aperture: s.aperture,
            ports: n,
            p: model.order(),
            alpha: model.alpha().iter().map(|a| [a.re, a.im]).collect(),
            sigma_eps2: model.sigma_eps2(),
            ridge: model.ridge(),
            stable: report.stable,
            root_moduli: report.root_moduli,
            selection,
        }
    }
}

/// Runs order selection over `1..=p_max`.
pub fn run_selection(s: &Settings, p_max: usize) -> Result<(ArpModel, FitReport), CliError> {
    let n = s.single_n()?;
    if s.mc < 1000 {
        return Err(CliError::usage(format!("order selection needs --mc >= 1000, got {}", s.mc)));
    }
    let channel = Channel::from_settings(s, n)?;
    let cfg = OrderSelectionConfig {
        p_max,
        mc_samples: s.mc,
        burn_in_factor: s.burn_factor,
        seed: s.seed,
        fit: s.fit,
        init: s.init,
    };
    let res = select_order(&channel.model, &cfg)?;
    let table = SelectionTable {
        p_star: res.p_star,
        d_min: res.min_distance(),
        mc_samples: res.reference_sample_count,
        d: res.distances.iter().map(|(&p, &d)| DistanceRow { p, d }).collect(),
        excluded: res.excluded.iter().map(|(&p, r)| ExcludedRow { p, reason: r.clone() }).collect(),
    };
    let report = FitReport::new(s, n, &res.model, Some(table));
    Ok((res.model, report))
}

/// Fixed-order fit, or order selection when only `p_max` is given.
pub fn run_fit(s: &Settings) -> Result<(ArpModel, FitReport), CliError> {
    let n = s.single_n()?;
    match (s.p, s.p_max) {
        (Some(p), _) => {
            if p >= n {
                return Err(CliError::usage(format!("--p must be < N = {n}, got {p}")));
            }
            let model = fit_order(s, &Channel::from_settings(s, n)?, p)?;
            let report = FitReport::new(s, n, &model, None);
            Ok((model, report))
        }
        (None, Some(p_max)) => run_selection(s, p_max),
        (None, None) => Err(CliError::usage("fit needs --p or --p-max")),
    }
}

/// The model used by `generate` and `cdf`: fixed order (default 20), or selected.
fn simulation_model(s: &Settings, n: usize) -> Result<ArpModel, CliError> {
    if s.p.is_none() && s.p_max.is_some() {
        return Ok(run_fit(s)?.0);
    }
    if let Some(p) = s.p {
        if p >= n {
            return Err(CliError::usage(format!("--p must be < N = {n}, got {p}")));
        }
    }
    fit_order(s, &Channel::from_settings(s, n)?, s.ar_order(n))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateRow {
    pub realization_id: usize,
    pub port_index: usize,
    pub re: f64,
    pub im: f64,
}

pub fn run_generate(s: &Settings) -> Result<Vec<GenerateRow>, CliError> {
    let n = s.single_n()?;
    let model = simulation_model(s, n)?;
    let cfg = SimulationConfig { n, burn_in: s.burn_in(n), seed: s.seed, init: s.init };
    let g = simulate_batch(&model, &cfg, s.count)?;
    let mut rows = Vec::with_capacity(s.count * n);
    for i in 0..s.count {
        for k in 0..n {
            rows.push(GenerateRow { realization_id: i, port_index: k + 1, re: g[(i, k)].re, im: g[(i, k)].im });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfRow {
    pub threshold: f64,
    pub f_exact_mc: f64,
    pub f_ar_direct_mc: f64,
    pub f_smc: f64,
    #[serde(rename = "J")]
    pub particles: usize,
    pub seed: u64,
    /// SMC estimate before the isotonic projection.
    pub f_smc_raw: f64,
}

/// Thresholds of the requested grid; quantile grids come from a pilot exact run.
pub fn thresholds(s: &Settings, channel: &Channel) -> Result<Vec<f64>, CliError> {
    match s.grid {
        GridSpec::Linear { .. } => Ok(s.grid.linear_points().expect("linear grid")),
        GridSpec::Quantile { count } => {
            let mut gains = sample_exact_max_gain(&channel.spectrum, derive_seed(s.seed, 4), s.pilot)?;
            gains.sort_by(f64::total_cmp);
            let mut t: Vec<f64> = (1..=count)
                .map(|i| gains[((i as f64 / (count + 1) as f64) * gains.len() as f64) as usize])
                .collect();
            t.dedup();
            Ok(t)
        }
    }
}

pub fn run_cdf(s: &Settings) -> Result<Vec<CdfRow>, CliError> {
    let n = s.single_n()?;
    let channel = Channel::from_settings(s, n)?;
    let model = simulation_model(s, n)?;
    let t = thresholds(s, &channel)?;
    let exact = sample_exact_max_gain(&channel.spectrum, derive_seed(s.seed, 1), s.mc)?;
    let exact = empirical_cdf_from_gains(&exact, &t)?;
    let sim = SimulationConfig { n, burn_in: s.burn_in(n), seed: derive_seed(s.seed, 2), init: s.init };
    let direct = empirical_cdf_from_gains(&simulate_max_gain_batch(&model, &sim, s.mc)?, &t)?;
    let smc_cfg = SmcConfig {
        particles: s.particles,
        ess_ratio: s.ess_ratio,
        burn_in: s.burn_in(n),
        init: s.init,
        seed: derive_seed(s.seed, 3),
    };
    let smc = smc_cdf(&model, n, &t, &smc_cfg)?;
    for d in smc.diagnostics.iter().filter(|d| d.extinction_step.is_some()) {
        log::info!("t = {}: all particles died at port {}", d.threshold, d.extinction_step.unwrap());
    }
    Ok((0..t.len())
        .map(|i| CdfRow {
            threshold: t[i],
            f_exact_mc: exact.values[i],
            f_ar_direct_mc: direct.values[i],
            f_smc: smc.curve.values[i],
            particles: s.particles,
            seed: s.seed,
            f_smc_raw: smc.curve.raw[i],
        })
        .collect())
}

fn strategy_or_default(s: &Settings) -> Result<Strategy, CliError> {
    match s.strategies.as_deref() {
        None => Ok(Strategy::UniformEndpoints),
        Some([one]) => Ok(*one),
        Some(_) => Err(CliError::usage("this command takes a single --strategy")),
    }
}

fn check_observation_count(strategy: Strategy, n: usize, m: usize, allow_full: bool) -> Result<(), CliError> {
    let max = if allow_full { n } else { n - 1 };
    if m < 1 || m > max {
        return Err(CliError::usage(format!("--M must lie in [1, {max}] for N = {n}, got {m}")));
    }
    if strategy == Strategy::UniformEndpoints && m < 2 {
        return Err(CliError::usage("uniform_endpoints needs M >= 2"));
    }
    Ok(())
}

fn noisy_observation(
    truth: &[Complex64],
    indices: Vec<usize>,
    sigma_v2: f64,
    seed: u64,
) -> Result<ObservationSet, CliError> {
    let mut rng = stream(seed);
    Ok(ObservationSet::observe(truth, indices, sigma_v2, &mut || complex_normal(&mut rng, 1.0))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationRow {
    pub port_index: usize,
    pub observed: u8,
    pub truth_re: f64,
    pub truth_im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub oracle_var: f64,
    pub kalman_re: f64,
    pub kalman_im: f64,
    pub kalman_var: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationSummary {
    #[serde(rename = "N")]
    pub ports: usize,
    #[serde(rename = "M")]
    pub observations: usize,
    pub p: usize,
    pub strategy: String,
    pub sigma_v2: f64,
    pub l_max: usize,
    /// Realized NMSE over the unobserved ports; absent when every port is observed.
    pub nmse_oracle: Option<f64>,
    pub nmse_kalman: Option<f64>,
    pub predicted_nmse_oracle: f64,
    pub predicted_nmse_kalman: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolationRun {
    pub summary: InterpolationSummary,
    pub rows: Vec<InterpolationRow>,
}

/// One realization: exact-model truth, sparse observations, both reconstructions.
pub fn run_interpolate(s: &Settings) -> Result<InterpolationRun, CliError> {
    let n = s.single_n()?;
    let strategy = strategy_or_default(s)?;
    let indices = match crate::config::checked_indices(s, n)? {
        Some(idx) => idx,
        None => {
            let m = s.observations(n);
            check_observation_count(strategy, n, m, true)?;
            port_select(strategy, n, m, derive_seed(s.seed, 2))?
        }
    };
    let channel = Channel::from_settings(s, n)?;
    let smoother = Smoother::new(fit_order(s, &channel, s.ar_order(n))?)?;
    let truth: Vec<Complex64> = sample_exact(&channel.spectrum, derive_seed(s.seed, 1), 1)?.row(0).iter().copied().collect();
    let obs = noisy_observation(&truth, indices, s.sigma_v2, derive_seed(s.seed, 3))?;
    let oracle = dense_mmse(&channel.cov, &obs)?;
    let kalman = kalman_smooth(&smoother.ss, &smoother.p_inf, &obs, n)?;
    let unobserved = obs.unobserved(n);
    let realized = |est: &[Complex64]| if unobserved.is_empty() { Ok(None) } else { nmse(&truth, est, &unobserved).map(Some) };
    let summary = InterpolationSummary {
        ports: n,
        observations: obs.len(),
        p: smoother.model.order(),
        strategy: if s.indices.is_some() { "explicit".into() } else { strategy.to_string() },
        sigma_v2: s.sigma_v2,
        l_max: max_gap(obs.indices(), n),
        nmse_oracle: realized(&oracle.means)?,
        nmse_kalman: realized(&kalman.means)?,
        predicted_nmse_oracle: oracle.nmse_unobserved,
        predicted_nmse_kalman: kalman.nmse_unobserved,
    };
    let mut observed = vec![0u8; n];
    for &k in obs.indices() {
        observed[k - 1] = 1;
    }
    let rows = (0..n)
        .map(|k| InterpolationRow {
            port_index: k + 1,
            observed: observed[k],
            truth_re: truth[k].re,
            truth_im: truth[k].im,
            oracle_re: oracle.means[k].re,
            oracle_im: oracle.means[k].im,
            oracle_var: oracle.variances[k],
            kalman_re: kalman.means[k].re,
            kalman_im: kalman.means[k].im,
            kalman_var: kalman.variances[k],
        })
        .collect();
    Ok(InterpolationRun { summary, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub trial_id: usize,
    pub strategy: String,
    #[serde(rename = "N")]
    pub ports: usize,
    #[serde(rename = "M")]
    pub observations: usize,
    pub sigma_v2: f64,
    pub nmse_kalman: f64,
    pub nmse_oracle: f64,
    pub l_max: usize,
    /// Kalman smoother wall time; omitted under `--no-meta` to keep output reproducible.
    pub wall_time_us: Option<u64>,
}

/// NMSE-vs-N table over random truths; every strategy sees the same truths and noise.
pub fn run_bench(s: &Settings) -> Result<Vec<BenchRow>, CliError> {
    let strategies = s.strategies.clone().unwrap_or_else(|| Strategy::ALL.to_vec());
    for &n in &s.ports {
        for &st in &strategies {
            check_observation_count(st, n, s.observations(n), false)?;
        }
    }
    let mut rows = Vec::new();
    for &n in &s.ports {
        let m = s.observations(n);
        let channel = Channel::from_settings(s, n)?;
        let smoother = Smoother::new(fit_order(s, &channel, s.ar_order(n))?)?;
        let base = derive_seed(s.seed, n as u64);
        let truths = sample_exact(&channel.spectrum, derive_seed(base, 0), s.trials)?;
        for &st in &strategies {
            let block: Vec<BenchRow> = (0..s.trials)
                .into_par_iter()
                .map(|t| {
                    let ts = derive_seed(base, t as u64 + 1);
                    let truth: Vec<Complex64> = truths.row(t).iter().copied().collect();
                    let idx = port_select(st, n, m, derive_seed(ts, 0))?;
                    let obs = noisy_observation(&truth, idx, s.sigma_v2, derive_seed(ts, 1))?;
                    let oracle = dense_mmse(&channel.cov, &obs)?;
                    let start = Instant::now();
                    let kalman = kalman_smooth(&smoother.ss, &smoother.p_inf, &obs, n)?;
                    let elapsed = start.elapsed().as_micros() as u64;
                    let u = obs.unobserved(n);
                    Ok(BenchRow {
                        trial_id: t,
                        strategy: st.to_string(),
                        ports: n,
                        observations: m,
                        sigma_v2: s.sigma_v2,
                        nmse_kalman: nmse(&truth, &kalman.means, &u)?,
                        nmse_oracle: nmse(&truth, &oracle.means, &u)?,
                        l_max: max_gap(obs.indices(), n),
                        wall_time_us: s.meta.then_some(elapsed),
                    })
                })
                .collect::<Result<_, CliError>>()?;
            rows.extend(block);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Oracle,
    Kalman,
}

/// Monte-Carlo NMSE over the unobserved ports as a function of `M`, with memoization.
pub struct NmseCurve<'a> {
    settings: &'a Settings,
    channel: &'a Channel,
    smoother: Option<&'a Smoother>,
    strategy: Strategy,
    truths: DMatrix<Complex64>,
    cache: HashMap<usize, (f64, f64)>,
}

impl<'a> NmseCurve<'a> {
    pub fn new(
        settings: &'a Settings,
        channel: &'a Channel,
        smoother: Option<&'a Smoother>,
        strategy: Strategy,
    ) -> Result<Self, CliError> {
        let truths = sample_exact(&channel.spectrum, derive_seed(settings.seed, 1), settings.trials)?;
        Ok(Self { settings, channel, smoother, strategy, truths, cache: HashMap::new() })
    }

    /// Mean and standard error of the per-trial NMSE at `m` observations.
    pub fn at(&mut self, m: usize) -> Result<(f64, f64), CliError> {
        if let Some(&v) = self.cache.get(&m) {
            return Ok(v);
        }
        let n = self.channel.model.ports();
        let s = self.settings;
        let values: Vec<f64> = (0..s.trials)
            .into_par_iter()
            .map(|t| {
                let truth: Vec<Complex64> = self.truths.row(t).iter().copied().collect();
                let ts = derive_seed(derive_seed(s.seed, 2), t as u64);
                let idx = port_select(self.strategy, n, m, derive_seed(ts, m as u64))?;
                let obs = noisy_observation(&truth, idx, s.sigma_v2, derive_seed(ts, 0))?;
                let means = match self.smoother {
                    None => dense_mmse(&self.channel.cov, &obs)?.means,
                    Some(sm) => kalman_smooth(&sm.ss, &sm.p_inf, &obs, n)?.means,
                };
                Ok(nmse(&truth, &means, &obs.unobserved(n))?)
            })
            .collect::<Result<_, CliError>>()?;
        let v = mean_and_stderr(&values);
        self.cache.insert(m, v);
        Ok(v)
    }

    /// Smallest `M` whose NMSE is within three standard errors of `epsilon`, found by
    /// bisection over `[lo, N - 1]`; `N` when no smaller count qualifies.
    pub fn min_observations(&mut self, epsilon: f64) -> Result<usize, CliError> {
        let n = self.channel.model.ports();
        let lo0 = if self.strategy == Strategy::UniformEndpoints { 2 } else { 1 };
        let meets = |m: usize, c: &mut Self| -> Result<bool, CliError> {
            let (mean, se) = c.at(m)?;
            Ok(mean <= epsilon + 3.0 * se)
        };
        if lo0 > n - 1 || !meets(n - 1, self)? {
            return Ok(n);
        }
        let (mut lo, mut hi) = (lo0, n - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if meets(mid, self)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub epsilon: f64,
    pub m_min_bound: usize,
    pub m_min_empirical_oracle: usize,
    pub m_min_empirical_kalman: usize,
}

pub fn run_bound(s: &Settings) -> Result<Vec<BoundRow>, CliError> {
    let n = s.single_n()?;
    let strategy = strategy_or_default(s)?;
    let channel = Channel::from_settings(s, n)?;
    let smoother = Smoother::new(fit_order(s, &channel, s.ar_order(n))?)?;
    let mut oracle = NmseCurve::new(s, &channel, None, strategy)?;
    let mut kalman = NmseCurve::new(s, &channel, Some(&smoother), strategy)?;
    s.epsilons
        .iter()
        .map(|&eps| {
            Ok(BoundRow {
                epsilon: eps,
                m_min_bound: min_observations_bound(&channel.spectrum, eps),
                m_min_empirical_oracle: oracle.min_observations(eps)?,
                m_min_empirical_kalman: kalman.min_observations(eps)?,
            })
        })
        .collect()
}
