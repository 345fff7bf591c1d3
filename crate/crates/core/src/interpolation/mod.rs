//! Channel reconstruction from sparse noisy port observations.
//!
//! Two estimators share one interface: the dense Gaussian MMSE oracle on a full
//! covariance, and a Kalman filter with RTS smoother on the AR(p) state space,
//! which is linear in `N`. Port indices in this module are 1-based.

mod bound;
mod dense;
mod kalman;
mod state_space;
mod strategy;

pub use bound::min_observations_bound;
pub use dense::dense_mmse;
pub use kalman::kalman_smooth;
pub use state_space::{build_state_space, lyapunov_residual, matched_state_covariance, stationary_covariance, StateSpace};
pub use strategy::{max_gap, port_select, Strategy};

use num_complex::Complex64;

use crate::{Error, Result};

/// Relative noise floor substituted for a noise-free request: `σ_v² = NOISE_FLOOR · r(0)`.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Observed ports `𝒪` (1-based, strictly increasing), their values and the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    indices: Vec<usize>,
    values: Vec<Complex64>,
    noise_var: f64,
}

impl ObservationSet {
    pub fn new(indices: Vec<usize>, values: Vec<Complex64>, noise_var: f64, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::domain("at least one observation is required"));
        }
        if indices.len() != values.len() {
            return Err(Error::domain(format!("{} indices but {} values", indices.len(), values.len())));
        }
        if indices.len() > n {
            return Err(Error::domain(format!("M = {} exceeds N = {n}", indices.len())));
        }
        if indices[0] < 1 || *indices.last().unwrap() > n {
            return Err(Error::domain(format!("observation indices must lie in [1, {n}]")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("observation indices must be strictly increasing"));
        }
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::domain(format!("noise variance must be >= 0, got {noise_var}")));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::domain("observation values must be finite"));
        }
        Ok(Self { indices, values, noise_var })
    }

    /// Observes `truth` at `indices` with additive `CN(0, noise_var)` noise drawn from `noise`.
    pub fn observe(truth: &[Complex64], indices: Vec<usize>, noise_var: f64, noise: &mut impl FnMut() -> Complex64) -> Result<Self> {
        let n = truth.len();
        if indices.iter().any(|&k| k < 1 || k > n) {
            return Err(Error::domain(format!("observation indices must lie in [1, {n}]")));
        }
        let values = indices.iter().map(|&k| truth[k - 1] + noise() * noise_var.sqrt()).collect();
        Self::new(indices, values, noise_var, n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Noise variance used by the estimators: the floor replaces an exact zero.
    pub fn effective_noise(&self, r0: f64) -> f64 {
        if self.noise_var > 0.0 {
            self.noise_var
        } else {
            NOISE_FLOOR * r0
        }
    }

    /// The complement `𝒰` within `1..=n`.
    pub fn unobserved(&self, n: usize) -> Vec<usize> {
        complement(&self.indices, n)
    }
}

pub(crate) fn complement(indices: &[usize], n: usize) -> Vec<usize> {
    let mut it = indices.iter().peekable();
    (1..=n)
        .filter(|k| {
            if it.peek() == Some(&k) {
                it.next();
                false
            } else {
                true
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Oracle,
    Kalman,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Kalman => "kalman",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Posterior means `ĝ_1..ĝ_N`.
    pub means: Vec<Complex64>,
    /// Posterior variances, clipped at 0.
    pub variances: Vec<f64>,
    /// Model-predicted NMSE over the unobserved ports (0 when every port is observed).
    pub nmse_unobserved: f64,
    pub method: Method,
}

/// `Σ_{k∈subset} |ĝ_k - g_k|² / Σ_{k∈subset} |g_k|²` over 1-based `subset`.
pub fn nmse(truth: &[Complex64], estimate: &[Complex64], subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::domain("NMSE over an empty port subset"));
    }
    if truth.len() != estimate.len() {
        return Err(Error::domain("truth and estimate lengths differ"));
    }
    if subset.iter().any(|&k| k < 1 || k > truth.len()) {
        return Err(Error::domain("NMSE subset index out of range"));
    }
    let num: f64 = subset.iter().map(|&k| (estimate[k - 1] - truth[k - 1]).norm_sqr()).sum();
    let den: f64 = subset.iter().map(|&k| truth[k - 1].norm_sqr()).sum();
    if !(den > 0.0) {
        return Err(Error::domain("NMSE reference has zero energy"));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn observation_set_validation() {
        assert!(ObservationSet::new(vec![1, 3], vec![c(1.0), c(2.0)], 0.0, 3).is_ok());
        assert!(ObservationSet::new(vec![], vec![], 0.0, 3).is_err());
        assert!(ObservationSet::new(vec![0], vec![c(1.0)], 0.0, 3).is_err());
        assert!(ObservationSet::new(vec![4], vec![c(1.0)], 0.0, 3).is_err());
        assert!(ObservationSet::new(vec![2, 2], vec![c(1.0), c(1.0)], 0.0, 3).is_err());
        assert!(ObservationSet::new(vec![1], vec![c(1.0)], -1.0, 3).is_err());
        assert!(ObservationSet::new(vec![1], vec![c(1.0), c(2.0)], 0.0, 3).is_err());
    }

    #[test]
    fn complement_and_floor() {
        let o = ObservationSet::new(vec![2, 4], vec![c(1.0), c(1.0)], 0.0, 5).unwrap();
        assert_eq!(o.unobserved(5), vec![1, 3, 5]);
        assert_eq!(o.effective_noise(2.0), 2e-10);
        let o = ObservationSet::new(vec![2], vec![c(1.0)], 0.01, 5).unwrap();
        assert_eq!(o.effective_noise(2.0), 0.01);
    }

    #[test]
    fn nmse_edges() {
        let t = vec![c(1.0), c(-2.0), Complex64::new(0.0, 3.0)];
        assert_eq!(nmse(&t, &t, &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(nmse(&t, &[c(0.0); 3], &[1, 3]).unwrap(), 1.0);
        assert!(nmse(&t, &t, &[]).is_err());
        assert!(nmse(&[c(0.0); 3], &t, &[1]).is_err());
    }
}
