//! CDF of the selection gain `g_max = max_k |g_k|²`: empirical estimates from
//! sampled channels and a sequential Monte-Carlo (particle) estimator under the
//! AR(p) model.
//!
//! For a threshold `t`, `F_p(t) = Pr(|g_k|² <= t for all k)` factors into the
//! conditional survival probabilities `c_k(t) = Pr(|g_k|² <= t | survived to k-1)`.
//! The particle flow estimates each `c_k` as the weighted fraction of particles
//! whose new sample stays below `t`, reweights by that indicator, and works in
//! the log domain so the product never underflows.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::arfit::{check_stability, ArpModel};
use crate::generator::{simulate_batch, Initialization, SimulationConfig};
use crate::rng::{complex_normal, derive_seed, stream, StreamRng};
use crate::stats::{empirical_cdf, isotonic_non_decreasing};
use crate::{Error, Result};

/// A CDF evaluated on a threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub thresholds: Vec<f64>,
    /// Monotone (isotonic-projected) estimates.
    pub values: Vec<f64>,
    /// Per-threshold estimates before projection.
    pub raw: Vec<f64>,
}

impl CdfCurve {
    /// `sup_t |F(t) - G(t)|` over the shared grid.
    pub fn sup_distance(&self, other: &CdfCurve) -> Result<f64> {
        if self.thresholds != other.thresholds {
            return Err(Error::domain("CDF curves are defined on different grids"));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::domain("threshold grid is empty"));
    }
    if thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::domain("thresholds must be finite and >= 0"));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("thresholds must be sorted ascending"));
    }
    Ok(())
}

/// `max_k |g_k|²` of every row.
pub fn max_gains(samples: &DMatrix<Complex64>) -> Vec<f64> {
    samples.row_iter().map(|r| r.iter().map(|g| g.norm_sqr()).fold(0.0, f64::max)).collect()
}

pub fn empirical_cdf_from_gains(gains: &[f64], thresholds: &[f64]) -> Result<CdfCurve> {
    validate_thresholds(thresholds)?;
    let values = empirical_cdf(gains, thresholds)?;
    Ok(CdfCurve { thresholds: thresholds.to_vec(), raw: values.clone(), values })
}

/// Fraction of rows (realizations) whose selection gain is `<= t`.
pub fn empirical_cdf_max_gain(samples: &DMatrix<Complex64>, thresholds: &[f64]) -> Result<CdfCurve> {
    if samples.nrows() == 0 || samples.ncols() == 0 {
        return Err(Error::domain("no samples"));
    }
    empirical_cdf_from_gains(&max_gains(samples), thresholds)
}

/// `1 / Σ w²` for normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling with a fixed offset `u ∈ [0, 1/J)`: ancestor of stratum
/// `j` is the particle whose cumulative weight interval contains `u + j/J`.
pub fn systematic_resample_with_offset(weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let j = weights.len();
    let total: f64 = weights.iter().sum();
    if j == 0 || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::domain("resampling needs non-negative weights with positive mass"));
    }
    let step = 1.0 / j as f64;
    let mut out = Vec::with_capacity(j);
    let mut cum = weights[0] / total;
    let mut i = 0;
    for s in 0..j {
        let pos = u + s as f64 * step;
        while pos >= cum && i + 1 < j {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    Ok(out)
}

pub fn systematic_resample(weights: &[f64], seed: u64) -> Result<Vec<usize>> {
    let j = weights.len().max(1);
    let u = stream(seed).random::<f64>() / j as f64;
    systematic_resample_with_offset(weights, u)
}

/// Particle-flow settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcConfig {
    /// Number of particles `J`.
    pub particles: usize,
    /// Resample when `ESS / J` falls below this.
    pub ess_ratio: f64,
    /// Burn-in used to draw the initial states.
    pub burn_in: usize,
    pub init: Initialization,
    pub seed: u64,
}

impl SmcConfig {
    /// Defaults: ESS ratio 0.5, burn-in `5N` after a stationary start.
    pub fn new(n: usize, particles: usize, seed: u64) -> Self {
        Self { particles, ess_ratio: 0.5, burn_in: 5 * n, init: Initialization::Stationary, seed }
    }
}

/// Per-threshold run statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcDiagnostics {
    pub threshold: f64,
    /// Port index `k` (1-based) at which every particle died, if that happened.
    pub extinction_step: Option<usize>,
    pub resample_count: usize,
    pub min_ess: f64,
    pub log_survival: f64,
}

#[derive(Debug, Clone)]
pub struct SmcResult {
    pub curve: CdfCurve,
    pub diagnostics: Vec<SmcDiagnostics>,
}

/// Weighted particle cloud for one threshold.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    /// `J × p` lifted states, row-major; row `j` is `(g_k, g_{k-1}, ..., g_{k-p+1})`.
    states: Vec<Complex64>,
    p: usize,
    weights: Vec<f64>,
    log_survival: f64,
    step: usize,
    extinct_at: Option<usize>,
    resample_count: usize,
    min_ess: f64,
}

impl ParticleEnsemble {
    /// Uniformly weighted particles at `k = 0`; `path` holds `g_1..g_p` per particle
    /// (time order), which become lifted states as the first `p` constraints are applied.
    fn new(paths: &DMatrix<Complex64>) -> Self {
        let (j, p) = paths.shape();
        let mut states = vec![Complex64::new(0.0, 0.0); j * p];
        for r in 0..j {
            for i in 0..p {
                states[r * p + i] = paths[(r, p - 1 - i)];
            }
        }
        Self {
            states,
            p,
            weights: vec![1.0 / j as f64; j],
            log_survival: 0.0,
            step: 0,
            extinct_at: None,
            resample_count: 0,
            min_ess: j as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_survival(&self) -> f64 {
        self.log_survival
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    pub fn is_extinct(&self) -> bool {
        self.extinct_at.is_some()
    }

    /// Applies the constraint `|g_k|² <= t` where `g_k` is state element `lag`
    /// of every particle (`lag = 0` for a freshly propagated sample).
    fn constrain(&mut self, lag: usize, t: f64) {
        self.step += 1;
        let p = self.p;
        let mut c = 0.0;
        for (j, w) in self.weights.iter_mut().enumerate() {
            if *w > 0.0 && self.states[j * p + lag].norm_sqr() > t {
                *w = 0.0;
            }
            c += *w;
        }
        if !(c > 0.0) {
            self.extinct_at = Some(self.step);
            self.log_survival = f64::NEG_INFINITY;
            return;
        }
        // c <= 1 up to rounding of the normalized weights.
        self.log_survival += c.ln().min(0.0);
        for w in &mut self.weights {
            *w /= c;
        }
    }

    fn propagate(&mut self, model: &ArpModel, rng: &mut StreamRng) {
        let (p, alpha, s2) = (self.p, model.alpha(), model.sigma_eps2());
        for (j, w) in self.weights.iter().enumerate() {
            // Dead particles are never selected again before the next resample.
            if *w == 0.0 {
                continue;
            }
            let row = &mut self.states[j * p..(j + 1) * p];
            let mut g = complex_normal(rng, s2);
            for (a, s) in alpha.iter().zip(row.iter()) {
                g += a * s;
            }
            row.copy_within(0..p - 1, 1);
            row[0] = g;
        }
    }

    fn maybe_resample(&mut self, ratio: f64, rng: &mut StreamRng) {
        let e = self.ess();
        self.min_ess = self.min_ess.min(e);
        let j = self.len();
        if e / j as f64 >= ratio {
            return;
        }
        let u = rng.random::<f64>() / j as f64;
        let idx = systematic_resample_with_offset(&self.weights, u).expect("weights have positive mass");
        let p = self.p;
        let mut next = vec![Complex64::new(0.0, 0.0); j * p];
        for (dst, &src) in idx.iter().enumerate() {
            next[dst * p..(dst + 1) * p].copy_from_slice(&self.states[src * p..(src + 1) * p]);
        }
        self.states = next;
        self.weights.fill(1.0 / j as f64);
        self.resample_count += 1;
    }
}

fn smc_single(model: &ArpModel, n: usize, t: f64, cfg: &SmcConfig, seed: u64) -> Result<SmcDiagnostics> {
    let p = model.order();
    // Initial states: the last p samples of a burnt-in generator run.
    let sim = SimulationConfig { n: p, burn_in: cfg.burn_in, seed: derive_seed(seed, 0), init: cfg.init };
    let paths = simulate_batch(model, &sim, cfg.particles)?;
    let mut ens = ParticleEnsemble::new(&paths);
    let mut rng = stream(derive_seed(seed, 1));

    let first = p.min(n);
    for k in 0..first {
        // g_{k+1} sits at lag p-1-k of the initial state.
        ens.constrain(p - 1 - k, t);
        if ens.is_extinct() {
            break;
        }
        if k + 1 < n {
            ens.maybe_resample(cfg.ess_ratio, &mut rng);
        }
    }
    for k in first..n {
        if ens.is_extinct() {
            break;
        }
        ens.propagate(model, &mut rng);
        ens.constrain(0, t);
        if ens.is_extinct() {
            break;
        }
        if k + 1 < n {
            ens.maybe_resample(cfg.ess_ratio, &mut rng);
        }
    }
    Ok(SmcDiagnostics {
        threshold: t,
        extinction_step: ens.extinct_at,
        resample_count: ens.resample_count,
        min_ess: ens.min_ess,
        log_survival: ens.log_survival,
    })
}

/// Particle estimate of `F_p(t)` on every threshold; thresholds are handled
/// independently with seeds derived from `cfg.seed` and the threshold index.
pub fn smc_cdf(model: &ArpModel, n: usize, thresholds: &[f64], cfg: &SmcConfig) -> Result<SmcResult> {
    validate_thresholds(thresholds)?;
    if n == 0 {
        return Err(Error::domain("N must be >= 1"));
    }
    if cfg.particles < 100 {
        return Err(Error::domain(format!("need at least 100 particles, got {}", cfg.particles)));
    }
    if !(cfg.ess_ratio > 0.0 && cfg.ess_ratio <= 1.0) {
        return Err(Error::domain(format!("ESS ratio must be in (0, 1], got {}", cfg.ess_ratio)));
    }
    let report = check_stability(model);
    if !report.stable {
        return Err(Error::Unstable { order: model.order(), max_modulus: report.max_modulus() });
    }
    let diagnostics = thresholds
        .par_iter()
        .enumerate()
        .map(|(m, &t)| smc_single(model, n, t, cfg, derive_seed(cfg.seed, m as u64)))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = diagnostics.iter().map(|d| d.log_survival.exp()).collect();
    let values = isotonic_non_decreasing(&raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(SmcResult { curve: CdfCurve { thresholds: thresholds.to_vec(), values, raw }, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::simulate_max_gain_batch;
    use proptest::prelude::*;

    fn real(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn ecdf_of_zero_sample() {
        let z = DMatrix::<Complex64>::zeros(1, 5);
        let c = empirical_cdf_max_gain(&z, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.values, vec![1.0; 3]);
        assert!(empirical_cdf_max_gain(&DMatrix::<Complex64>::zeros(0, 5), &[1.0]).is_err());
        assert!(empirical_cdf_max_gain(&z, &[]).is_err());
        assert!(empirical_cdf_max_gain(&z, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn ecdf_below_minimum_is_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[real(1.0), real(2.0), real(3.0), real(0.5)]);
        let c = empirical_cdf_max_gain(&s, &[0.5, 4.0, 8.9, 9.0]).unwrap();
        assert_eq!(c.values, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn resample_uniform_is_identity() {
        let w = vec![0.25; 4];
        assert_eq!(systematic_resample(&w, 3).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn resample_point_mass() {
        let mut w = vec![0.0; 6];
        w[0] = 1.0;
        assert_eq!(systematic_resample(&w, 8).unwrap(), vec![0; 6]);
        w[0] = 0.0;
        w[5] = 1.0;
        assert_eq!(systematic_resample(&w, 8).unwrap(), vec![5; 6]);
        assert!(systematic_resample(&[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn copy_counts_are_within_one() {
        let w = [0.05, 0.3, 0.0, 0.15, 0.5];
        let j = w.len() as f64;
        let mut mean = [0.0; 5];
        let trials = 100_000;
        for s in 0..trials {
            let idx = systematic_resample(&w, s).unwrap();
            let mut counts = [0usize; 5];
            for i in idx {
                counts[i] += 1;
            }
            for i in 0..5 {
                assert!((counts[i] as f64 - j * w[i]).abs() <= 1.0);
                mean[i] += counts[i] as f64 / trials as f64;
            }
        }
        for i in 0..5 {
            assert!((mean[i] - j * w[i]).abs() <= 0.01 * j * w[i].max(0.01));
        }
    }

    #[test]
    fn smc_trivial_thresholds() {
        let m = ArpModel::from_coefficients(vec![Complex64::new(0.8, 0.1)], 0.35).unwrap();
        let n = 30;
        let big = 1e3 * m.r0() * (1.0 + (n as f64).ln());
        let res = smc_cdf(&m, n, &[0.0, big], &SmcConfig::new(n, 200, 1)).unwrap();
        assert_eq!(res.curve.values[0], 0.0);
        assert_eq!(res.diagnostics[0].extinction_step, Some(1));
        assert!((res.curve.values[1] - 1.0).abs() < 1e-3);
        assert_eq!(res.diagnostics[1].extinction_step, None);
    }

    #[test]
    fn smc_rejects_bad_config() {
        let m = ArpModel::from_coefficients(vec![real(0.5)], 0.75).unwrap();
        assert!(smc_cdf(&m, 10, &[1.0], &SmcConfig::new(10, 99, 1)).is_err());
        assert!(smc_cdf(&m, 10, &[1.0], &SmcConfig { ess_ratio: 0.0, ..SmcConfig::new(10, 100, 1) }).is_err());
        assert!(smc_cdf(&m, 10, &[], &SmcConfig::new(10, 100, 1)).is_err());
    }

    #[test]
    fn smc_is_deterministic() {
        let m = ArpModel::from_coefficients(vec![real(0.7), real(0.1)], 0.4).unwrap();
        let cfg = SmcConfig::new(20, 300, 5);
        let a = smc_cdf(&m, 20, &[1.0, 2.0, 3.0], &cfg).unwrap();
        let b = smc_cdf(&m, 20, &[1.0, 2.0, 3.0], &cfg).unwrap();
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn white_model_has_closed_form() {
        // Independent ports: F(t) = (1 - e^{-t/σ²})^N.
        let m = yule_walker_white(1.0);
        let n = 10;
        let ts = [1.0, 2.0, 3.0, 5.0];
        let res = smc_cdf(&m, n, &ts, &SmcConfig::new(n, 5000, 2)).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let exact = (1.0 - (-t).exp()).powi(n as i32);
            assert!((res.curve.raw[i] - exact).abs() < 0.02, "t={t}: {} vs {exact}", res.curve.raw[i]);
        }
    }

    fn yule_walker_white(s2: f64) -> ArpModel {
        crate::arfit::yule_walker_fit(&[real(s2), real(0.0)]).unwrap()
    }

    #[test]
    fn smc_agrees_with_direct_simulation() {
        let m = ArpModel::from_coefficients(vec![Complex64::new(1.2, 0.1), real(-0.5)], 0.3).unwrap();
        let n = 40;
        let gains = simulate_max_gain_batch(&m, &SimulationConfig::new(n, 9), 10_000).unwrap();
        let mut sorted = gains.clone();
        sorted.sort_by(f64::total_cmp);
        let ts: Vec<f64> = (1..10).map(|q| sorted[q * 1000]).collect();
        let direct = empirical_cdf_from_gains(&gains, &ts).unwrap();
        let smc = smc_cdf(&m, n, &ts, &SmcConfig::new(n, 10_000, 10)).unwrap();
        let d = smc.curve.sup_distance(&direct).unwrap();
        assert!(d <= 0.03, "sup gap {d}");
        for diag in &smc.diagnostics {
            assert!(diag.min_ess >= 1.0 && diag.min_ess <= 10_000.0 + 1e-6);
            assert!(diag.log_survival <= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn resample_counts_bound(w in prop::collection::vec(0.0f64..1.0, 1..40), u in 0.0f64..1.0) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let total: f64 = w.iter().sum();
            let j = w.len();
            let idx = systematic_resample_with_offset(&w, u / j as f64).unwrap();
            prop_assert_eq!(idx.len(), j);
            let mut counts = vec![0usize; j];
            for i in idx {
                counts[i] += 1;
            }
            for i in 0..j {
                prop_assert!((counts[i] as f64 - j as f64 * w[i] / total).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn ensemble_weights_stay_normalized(t in 0.2f64..4.0, seed in 0u64..1000) {
            let m = ArpModel::from_coefficients(vec![real(0.6)], 0.64).unwrap();
            let paths = simulate_batch(&m, &SimulationConfig::new(1, seed), 200).unwrap();
            let mut ens = ParticleEnsemble::new(&paths);
            let mut rng = stream(seed);
            let mut last = 0.0;
            for _ in 0..10 {
                ens.propagate(&m, &mut rng);
                ens.constrain(0, t);
                if ens.is_extinct() {
                    break;
                }
                let s: f64 = ens.weights().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(ens.ess() >= 1.0 - 1e-9 && ens.ess() <= 200.0 + 1e-9);
                prop_assert!(ens.log_survival() <= last);
                last = ens.log_survival();
                ens.maybe_resample(0.5, &mut rng);
            }
        }
    }
}
