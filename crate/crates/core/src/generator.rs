//! Burn-in simulation of stationary AR(p) channel realizations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::arfit::{check_stability, ArpModel};
use crate::rng::{complex_normal, derive_seed, stream, StreamRng};
use crate::{Error, Result};

/// Initial state of the recursion before burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    /// `g_0 = ... = g_{-p+1} = 0`.
    #[default]
    Zero,
    /// Draw the initial state from its stationary law `CN(0, R_p)`, so any
    /// burn-in is redundant.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Output length.
    pub n: usize,
    /// Number of leading samples discarded.
    pub burn_in: usize,
    pub seed: u64,
    pub init: Initialization,
}

impl SimulationConfig {
    /// Zero initialization with the default burn-in `5N`.
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, burn_in: 5 * n, seed, init: Initialization::Zero }
    }
}

/// Everything needed to run one realization, validated once per batch.
struct Prepared<'a> {
    alpha: &'a [Complex64],
    sigma_eps2: f64,
    /// Lower Cholesky factor of the stationary state covariance, for `Initialization::Stationary`.
    init_factor: Option<DMatrix<Complex64>>,
}

fn prepare<'a>(model: &'a ArpModel, cfg: &SimulationConfig) -> Result<Prepared<'a>> {
    if cfg.n == 0 {
        return Err(Error::domain("output length N must be >= 1"));
    }
    let report = check_stability(model);
    if !report.stable {
        return Err(Error::Unstable { order: model.order(), max_modulus: report.max_modulus() });
    }
    let init_factor = match cfg.init {
        Initialization::Zero => None,
        Initialization::Stationary => {
            let p = model.order();
            let r = model.source_lags();
            // State (g_k, g_{k-1}, ...): E[s_i s_j*] = r(j-i).
            let cov = DMatrix::from_fn(p, p, |i, j| if j >= i { r[j - i] } else { r[i - j].conj() });
            let chol = nalgebra::Cholesky::new(cov)
                .ok_or_else(|| Error::Numerical("stationary state covariance is not positive definite".into()))?;
            Some(chol.l())
        }
    };
    Ok(Prepared { alpha: model.alpha(), sigma_eps2: model.sigma_eps2(), init_factor })
}

/// Runs the recursion, discards `burn_in` samples and hands `g_1..g_N` to `sink`.
fn run(prep: &Prepared<'_>, cfg: &SimulationConfig, rng: &mut StreamRng, mut sink: impl FnMut(usize, Complex64)) {
    let p = prep.alpha.len();
    // hist[p - 1 - i] holds g_{k-1-i}; a sliding window over a flat buffer.
    let total = cfg.burn_in + cfg.n;
    let mut buf = vec![Complex64::new(0.0, 0.0); p + total];
    if let Some(l) = &prep.init_factor {
        let z: Vec<Complex64> = (0..p).map(|_| complex_normal(rng, 1.0)).collect();
        for i in 0..p {
            let v: Complex64 = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            // State element i is g_{-i}, stored at buf[p - 1 - i].
            buf[p - 1 - i] = v;
        }
    }
    for k in 0..total {
        let mut acc = complex_normal(rng, prep.sigma_eps2);
        let past = &buf[k..k + p];
        for (i, a) in prep.alpha.iter().enumerate() {
            acc += a * past[p - 1 - i];
        }
        buf[k + p] = acc;
        if k >= cfg.burn_in {
            sink(k - cfg.burn_in, acc);
        }
    }
}

/// One length-`N` realization.
pub fn simulate(model: &ArpModel, cfg: &SimulationConfig) -> Result<Vec<Complex64>> {
    let prep = prepare(model, cfg)?;
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.n];
    run(&prep, cfg, &mut stream(cfg.seed), |k, g| out[k] = g);
    Ok(out)
}

/// `count × N` realizations; row `i` equals `simulate` with seed `derive_seed(seed, i)`.
pub fn simulate_batch(model: &ArpModel, cfg: &SimulationConfig, count: usize) -> Result<DMatrix<Complex64>> {
    let prep = prepare(model, cfg)?;
    let rows: Vec<Vec<Complex64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::new(0.0, 0.0); cfg.n];
            run(&prep, cfg, &mut stream(derive_seed(cfg.seed, i as u64)), |k, g| row[k] = g);
            row
        })
        .collect();
    Ok(DMatrix::from_fn(count, cfg.n, |i, k| rows[i][k]))
}

/// Selection gains `max_k |g_k|²` of the rows `simulate_batch` would produce.
pub fn simulate_max_gain_batch(model: &ArpModel, cfg: &SimulationConfig, count: usize) -> Result<Vec<f64>> {
    let prep = prepare(model, cfg)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            run(&prep, cfg, &mut stream(derive_seed(cfg.seed, i as u64)), |_, g| best = best.max(g.norm_sqr()));
            best
        })
        .collect())
}
