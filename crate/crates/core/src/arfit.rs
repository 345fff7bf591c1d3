//! AR(p) Gauss-Markov surrogate fitted by complex Yule-Walker correlation
//! matching, stability analysis, autocorrelation extension and order selection.
//!
//! The model is `g_k = Σ_{i=1..p} α_i g_{k-i} + ε_k`, `ε_k ~ CN(0, σ_ε²)`, and
//! lags are `r(ℓ) = E[g_k g*_{k-ℓ}]`. Matching `r(0..p)` gives the normal
//! equations `R α = r` with `R_ij = r(i-j)` (Hermitian Toeplitz built from
//! `r(0..p-1)`), `r = (r(1), ..., r(p))`, and `σ_ε² = r(0) - Re(αᴴ r)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::correlation::{build_covariance, eigen_spectrum, sample_exact_max_gain, ClarkeModel, ToeplitzCovariance};
use crate::generator::{simulate_max_gain_batch, Initialization, SimulationConfig};
use crate::rng::derive_seed;
use crate::stats::ks_two_sample;
use crate::{Error, Result};

/// Orders whose largest root modulus reaches `1 - STABILITY_MARGIN` are treated as unstable.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// Condition estimate above which the Yule-Walker matrix is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Tolerance (absolute) used to break ties between candidate orders.
pub const ORDER_TIE_TOLERANCE: f64 = 1e-4;

/// A fitted (or hand-specified) complex AR(p) model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArpModel {
    alpha: Vec<Complex64>,
    sigma_eps2: f64,
    source_lags: Vec<Complex64>,
    ridge: f64,
}

/// Autocorrelation `r(0..=p)` of a stable AR(p) model: step down to the
/// reflection coefficients, then rebuild the lags with the Levinson recursion.
fn lags_from_coefficients(alpha: &[Complex64], sigma_eps2: f64) -> Vec<Complex64> {
    let p = alpha.len();
    // preds[m - 1] holds the order-m predictor.
    let mut preds = vec![alpha.to_vec()];
    let mut err = sigma_eps2;
    let mut errs = vec![0.0; p + 1];
    errs[p] = err;
    for m in (1..=p).rev() {
        let a = preds.last().unwrap();
        let k = a[m - 1];
        let den = 1.0 - k.norm_sqr();
        err /= den;
        errs[m - 1] = err;
        let lower: Vec<Complex64> = (0..m - 1).map(|i| (a[i] + k * a[m - 2 - i].conj()) / den).collect();
        preds.push(lower);
    }
    preds.reverse();
    let mut lags = vec![Complex64::new(errs[0], 0.0)];
    for m in 1..=p {
        let a = &preds[m];
        let lower = &preds[m - 1];
        let k = a[m - 1];
        let mut r = k * errs[m - 1];
        for i in 0..m - 1 {
            r += lower[i] * lags[m - 1 - i];
        }
        lags.push(r);
    }
    lags
}

impl ArpModel {
    /// Builds a model from its coefficients; the matched lags `r(0..p)` are the
    /// stationary autocorrelation of the recursion. Fails for unstable models.
    pub fn from_coefficients(alpha: Vec<Complex64>, sigma_eps2: f64) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::domain("AR order must be >= 1"));
        }
        if !(sigma_eps2.is_finite() && sigma_eps2 >= 0.0) {
            return Err(Error::domain(format!("innovation variance must be >= 0, got {sigma_eps2}")));
        }
        let p = alpha.len();
        let report = stability_of(&alpha);
        if !report.stable {
            return Err(Error::Unstable { order: p, max_modulus: report.max_modulus() });
        }
        let lags = lags_from_coefficients(&alpha, sigma_eps2);
        Ok(Self { alpha, sigma_eps2, source_lags: lags, ridge: 0.0 })
    }

    /// Model whose characteristic roots (the poles of the recursion) are `roots`:
    /// `A(z) = Π (1 - ρ_i z^{-1})`.
    pub fn from_roots(roots: &[Complex64], sigma_eps2: f64) -> Result<Self> {
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for rho in roots {
            poly.push(Complex64::new(0.0, 0.0));
            for i in (1..poly.len()).rev() {
                let prev = poly[i - 1];
                poly[i] -= rho * prev;
            }
        }
        Self::from_coefficients(poly[1..].iter().map(|c| -c).collect(), sigma_eps2)
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn sigma_eps2(&self) -> f64 {
        self.sigma_eps2
    }

    /// `r(0..p)` the model reproduces exactly (including any diagonal loading in `r(0)`).
    pub fn source_lags(&self) -> &[Complex64] {
        &self.source_lags
    }

    /// Diagonal loading added to `r(0)` during the fit (0 for an unregularized fit).
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn r0(&self) -> f64 {
        self.source_lags[0].re
    }
}

/// How to treat a Yule-Walker matrix whose condition estimate exceeds the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularization {
    /// Refuse the fit.
    #[default]
    None,
    /// Add the smallest multiple of the identity that brings the condition
    /// estimate down to the cap; equivalent to matching the lags of the channel
    /// plus a white component of that variance.
    ConditionCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_condition: f64,
    pub regularization: Regularization,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_condition: MAX_CONDITION, regularization: Regularization::None }
    }
}

impl FitOptions {
    pub fn regularized() -> Self {
        Self { regularization: Regularization::ConditionCap, ..Self::default() }
    }
}

/// Hermitian Toeplitz Yule-Walker matrix `R_ij = r(i-j)`, `i, j < p`.
fn yule_walker_matrix(lags: &[Complex64], p: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(p, p, |i, j| if i >= j { lags[i - j] } else { lags[j - i].conj() })
}

/// Fits AR(p), `p = lags.len() - 1`, to `r(0..p)`, refusing ill-conditioned systems.
pub fn yule_walker_fit(lags: &[Complex64]) -> Result<ArpModel> {
    yule_walker_fit_with(lags, &FitOptions::default())
}

pub fn yule_walker_fit_with(lags: &[Complex64], opts: &FitOptions) -> Result<ArpModel> {
    if lags.len() < 2 {
        return Err(Error::domain("Yule-Walker fit needs r(0..p) with p >= 1"));
    }
    let p = lags.len() - 1;
    let r0 = lags[0];
    if !(r0.re.is_finite() && r0.re > 0.0) || r0.im.abs() > 1e-12 * r0.re {
        return Err(Error::domain(format!("r(0) must be real and > 0, got {r0}")));
    }
    let mut lags = lags.to_vec();
    lags[0] = Complex64::new(r0.re, 0.0);

    let r_mat = yule_walker_matrix(&lags, p);
    let eig = nalgebra::SymmetricEigen::try_new(r_mat, f64::EPSILON, 1000 * p)
        .ok_or_else(|| Error::Numerical(format!("eigensolver failed on the order-{p} Yule-Walker matrix")))?;
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    let mut ridge = 0.0;
    if !(condition <= opts.max_condition) {
        match opts.regularization {
            Regularization::None => return Err(Error::IllConditioned { order: p, condition }),
            Regularization::ConditionCap => {
                let k = opts.max_condition;
                ridge = ((lmax - k * lmin) / (k - 1.0)).max(0.0);
                lags[0].re += ridge;
            }
        }
    }

    let r_mat = yule_walker_matrix(&lags, p);
    let rhs = DVector::from_iterator(p, lags[1..].iter().copied());
    let chol = nalgebra::Cholesky::new(r_mat.clone()).ok_or(Error::IllConditioned { order: p, condition })?;
    let mut alpha = chol.solve(&rhs);
    // One step of iterative refinement keeps the normal-equation residual at working precision.
    let resid = &rhs - &r_mat * &alpha;
    alpha += chol.solve(&resid);

    let ahr: Complex64 = alpha.iter().zip(rhs.iter()).map(|(a, r)| a.conj() * r).sum();
    let sigma_eps2 = lags[0].re - ahr.re;
    if !(sigma_eps2 >= 0.0) {
        return Err(Error::IllConditioned { order: p, condition });
    }
    Ok(ArpModel { alpha: alpha.iter().copied().collect(), sigma_eps2, source_lags: lags, ridge })
}

/// `‖R α - r‖ / ‖r‖` for the model's own source lags.
pub fn normal_equation_residual(model: &ArpModel) -> f64 {
    let p = model.order();
    let r_mat = yule_walker_matrix(&model.source_lags, p);
    let alpha = DVector::from_column_slice(&model.alpha);
    let rhs = DVector::from_iterator(p, model.source_lags[1..].iter().copied());
    (&r_mat * alpha - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
}

/// Root moduli of `A(z) = 1 - Σ α_i z^{-i}` and the resulting stability verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Sorted descending.
    pub root_moduli: Vec<f64>,
    pub stable: bool,
    /// `1 - max modulus`.
    pub margin: f64,
}

impl StabilityReport {
    pub fn max_modulus(&self) -> f64 {
        self.root_moduli.first().copied().unwrap_or(0.0)
    }
}

/// `p × p` companion matrix: first row `α`, ones on the subdiagonal.
pub fn companion_matrix(alpha: &[Complex64]) -> DMatrix<Complex64> {
    let p = alpha.len();
    let mut a = DMatrix::zeros(p, p);
    for (j, &c) in alpha.iter().enumerate() {
        a[(0, j)] = c;
    }
    for i in 1..p {
        a[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    a
}

/// Roots of `z^p - α_1 z^{p-1} - ... - α_p`, i.e. the companion eigenvalues.
pub fn ar_roots(alpha: &[Complex64]) -> Vec<Complex64> {
    match alpha.len() {
        0 => vec![],
        1 => vec![alpha[0]],
        p => {
            let a = companion_matrix(alpha);
            nalgebra::Schur::try_new(a, f64::EPSILON, 10_000 * p)
                .and_then(|s| s.eigenvalues())
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| vec![Complex64::new(f64::NAN, f64::NAN); p])
        }
    }
}

fn stability_of(alpha: &[Complex64]) -> StabilityReport {
    let mut root_moduli: Vec<f64> = ar_roots(alpha).iter().map(|z| z.norm()).collect();
    root_moduli.sort_by(|a, b| b.total_cmp(a));
    let max = root_moduli.first().copied().unwrap_or(0.0);
    // NaN moduli (eigensolver failure) compare false and so count as unstable.
    let stable = max < 1.0 - STABILITY_MARGIN;
    StabilityReport { root_moduli, stable, margin: 1.0 - max }
}

pub fn check_stability(model: &ArpModel) -> StabilityReport {
    stability_of(&model.alpha)
}

fn require_stable(model: &ArpModel) -> Result<()> {
    let report = check_stability(model);
    if report.stable {
        Ok(())
    } else {
        Err(Error::Unstable { order: model.order(), max_modulus: report.max_modulus() })
    }
}

/// `r(0..=max_lag)`: the matched lags followed by `r(ℓ) = Σ α_i r(ℓ-i)`.
pub fn extend_autocorrelation(model: &ArpModel, max_lag: usize) -> Result<Vec<Complex64>> {
    let p = model.order();
    if max_lag < p {
        return Err(Error::domain(format!("extension length {max_lag} shorter than order {p}")));
    }
    require_stable(model)?;
    let mut r = Vec::with_capacity(max_lag + 1);
    r.extend_from_slice(&model.source_lags);
    for l in p + 1..=max_lag {
        let v = (0..p).map(|i| model.alpha[i] * r[l - 1 - i]).sum();
        r.push(v);
    }
    Ok(r)
}

/// `N × N` Toeplitz covariance of `N` consecutive samples of the stationary AR process.
pub fn arp_induced_covariance(model: &ArpModel, n: usize) -> Result<ToeplitzCovariance> {
    if n == 0 {
        return Err(Error::domain("covariance dimension must be >= 1"));
    }
    let lags = if n > model.order() {
        extend_autocorrelation(model, n - 1)?
    } else {
        require_stable(model)?;
        model.source_lags[..n].to_vec()
    };
    ToeplitzCovariance::from_lags(lags)
}

/// Lags `σ² a(0..=p)` of a Clarke model.
pub fn clarke_lags(model: &ClarkeModel, p: usize) -> Result<Vec<Complex64>> {
    if p >= model.ports() {
        return Err(Error::domain(format!("order {p} must be < N = {}", model.ports())));
    }
    let cov = build_covariance(model);
    Ok(cov.lags()[..=p].to_vec())
}

/// Settings of the Monte-Carlo order search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSelectionConfig {
    pub p_max: usize,
    pub mc_samples: usize,
    /// Burn-in is `burn_in_factor · N`.
    pub burn_in_factor: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub init: Initialization,
}

impl OrderSelectionConfig {
    /// Condition-capped fits, simulated from a stationary start followed by the burn-in.
    ///
    /// Clarke fits on densely spaced ports have poles within about 1e-3 of the unit
    /// circle, so a zero start does not forget its transient within `5N` steps.
    pub fn new(p_max: usize, mc_samples: usize, burn_in_factor: usize, seed: u64) -> Self {
        Self {
            p_max,
            mc_samples,
            burn_in_factor,
            seed,
            fit: FitOptions::regularized(),
            init: Initialization::Stationary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderSelectionResult {
    pub p_star: usize,
    /// KS distance `D(p)` for every admissible order.
    pub distances: BTreeMap<usize, f64>,
    /// Orders left out, with the reason (fit failure or instability).
    pub excluded: BTreeMap<usize, String>,
    pub reference_sample_count: usize,
    /// The fitted model at `p_star`.
    pub model: ArpModel,
}

impl OrderSelectionResult {
    pub fn min_distance(&self) -> f64 {
        self.distances[&self.p_star]
    }
}

/// Fits and evaluates every order in `1..=p_max`, returning the one whose
/// selection-gain distribution is closest (two-sample KS) to the exact model's.
pub fn select_order(model: &ClarkeModel, cfg: &OrderSelectionConfig) -> Result<OrderSelectionResult> {
    let n = model.ports();
    if cfg.p_max == 0 || cfg.p_max > n {
        return Err(Error::domain(format!("p_max must be in [1, N={n}], got {}", cfg.p_max)));
    }
    if cfg.mc_samples < 1000 {
        return Err(Error::domain(format!("need at least 1000 Monte-Carlo samples, got {}", cfg.mc_samples)));
    }
    let cov = build_covariance(model);
    let spectrum = eigen_spectrum(&cov)?;
    let reference = sample_exact_max_gain(&spectrum, derive_seed(cfg.seed, 0), cfg.mc_samples)?;

    let mut distances = BTreeMap::new();
    let mut excluded = BTreeMap::new();
    let mut models = BTreeMap::new();
    // Fitting order p needs r(0..=p), and only r(0..N-1) exist.
    for p in 1..=cfg.p_max.min(n - 1) {
        let fitted = match yule_walker_fit_with(&cov.lags()[..=p], &cfg.fit) {
            Ok(m) => m,
            Err(e) => {
                excluded.insert(p, e.to_string());
                continue;
            }
        };
        let report = check_stability(&fitted);
        if !report.stable {
            excluded.insert(p, format!("unstable, max root modulus {:.9}", report.max_modulus()));
            continue;
        }
        let sim = SimulationConfig { n, burn_in: cfg.burn_in_factor * n, seed: derive_seed(cfg.seed, p as u64), init: cfg.init };
        let gains = simulate_max_gain_batch(&fitted, &sim, cfg.mc_samples)?;
        let d = ks_two_sample(&reference, &gains)?;
        log::debug!("order {p}: D = {d:.5}");
        distances.insert(p, d);
        models.insert(p, fitted);
    }
    if distances.is_empty() {
        return Err(Error::Selection(format!("no admissible order in [1, {}]", cfg.p_max)));
    }
    let best = distances.values().copied().fold(f64::INFINITY, f64::min);
    let p_star = *distances
        .iter()
        .find(|(_, &d)| d <= best + ORDER_TIE_TOLERANCE)
        .map(|(p, _)| p)
        .expect("minimum is attained");
    Ok(OrderSelectionResult {
        p_star,
        model: models.remove(&p_star).expect("fitted"),
        distances,
        excluded,
        reference_sample_count: reference.len(),
    })
}
