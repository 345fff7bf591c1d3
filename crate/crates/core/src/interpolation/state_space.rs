use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::arfit::{check_stability, companion_matrix, ArpModel};
use crate::{Error, Result};

const LYAPUNOV_TOLERANCE: f64 = 1e-12;
const LYAPUNOV_BUDGET: usize = 10_000;

/// First-order form of the AR(p) recursion: `s_{k+1} = A s_k + e_1 ε_k`,
/// `g_k = H s_k`, with `s_k = (g_k, ..., g_{k-p+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    alpha: Vec<Complex64>,
    sigma_eps2: f64,
}

impl StateSpace {
    pub(crate) fn from_parts(alpha: &[Complex64], sigma_eps2: f64) -> Self {
        Self { alpha: alpha.to_vec(), sigma_eps2 }
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

    /// Companion matrix.
    pub fn a(&self) -> DMatrix<Complex64> {
        companion_matrix(&self.alpha)
    }

    /// Process noise: `σ_ε²` at (1,1), zero elsewhere.
    pub fn q(&self) -> DMatrix<Complex64> {
        let p = self.order();
        let mut q = DMatrix::zeros(p, p);
        q[(0, 0)] = Complex64::new(self.sigma_eps2, 0.0);
        q
    }

    /// Measurement row `(1, 0, ..., 0)`.
    pub fn h(&self) -> DVector<Complex64> {
        let mut h = DVector::zeros(self.order());
        h[0] = Complex64::new(1.0, 0.0);
        h
    }

    /// `A P Aᴴ` in `O(p²)` using the companion structure.
    pub(crate) fn propagate_cov(&self, p_mat: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let p = self.order();
        // row0[j] = (αᵀ P)_j
        let row0: Vec<Complex64> =
            (0..p).map(|j| (0..p).map(|i| self.alpha[i] * p_mat[(i, j)]).sum()).collect();
        let m00: Complex64 = (0..p).map(|j| row0[j] * self.alpha[j].conj()).sum();
        out[(0, 0)] = Complex64::new(m00.re, 0.0);
        for j in 1..p {
            out[(0, j)] = row0[j - 1];
            out[(j, 0)] = row0[j - 1].conj();
        }
        for j in 1..p {
            for i in 1..p {
                out[(i, j)] = p_mat[(i - 1, j - 1)];
            }
        }
    }

    /// `A m` in `O(p)`.
    pub(crate) fn propagate_mean(&self, m: &[Complex64], out: &mut [Complex64]) {
        let p = self.order();
        out[0] = self.alpha.iter().zip(m).map(|(a, x)| a * x).sum();
        out[1..p].copy_from_slice(&m[..p - 1]);
    }
}

/// State-space form of a stable model.
pub fn build_state_space(model: &ArpModel) -> Result<StateSpace> {
    let report = check_stability(model);
    if !report.stable {
        return Err(Error::Unstable { order: model.order(), max_modulus: report.max_modulus() });
    }
    Ok(StateSpace::from_parts(model.alpha(), model.sigma_eps2()))
}

/// Stationary state covariance `P = A P Aᴴ + Q` by the doubling iteration
/// `P ← P + A_k P A_kᴴ`, `A_k ← A_k²`.
pub fn stationary_covariance(ss: &StateSpace) -> Result<DMatrix<Complex64>> {
    let mut a = ss.a();
    let mut p = ss.q();
    let q_norm = p.norm();
    for _ in 0..LYAPUNOV_BUDGET {
        let inc = &a * &p * a.adjoint();
        p += &inc;
        p = (&p + p.adjoint()) * Complex64::new(0.5, 0.0);
        let pn = p.norm();
        if !pn.is_finite() {
            return Err(Error::Numerical("Lyapunov iteration diverged".into()));
        }
        // Converged once the increment is negligible against both P and Q; the
        // quadratic convergence makes the extra steps cheap.
        let inc_n = inc.norm();
        if inc_n <= LYAPUNOV_TOLERANCE * q_norm.min(pn) || inc_n <= f64::EPSILON * pn {
            return Ok(p);
        }
        a = &a * &a;
    }
    Err(Error::Numerical(format!("Lyapunov iteration did not converge in {LYAPUNOV_BUDGET} steps")))
}

/// Stationary state covariance implied by the model's matched lags,
/// `P_ij = E[g_{k-i} g*_{k-j}] = r(j-i)`. For a Yule-Walker fit this is the exact
/// Lyapunov solution and, unlike the iteration, does not inherit the
/// conditioning of the fit.
pub fn matched_state_covariance(model: &ArpModel) -> DMatrix<Complex64> {
    let p = model.order();
    let r = model.source_lags();
    DMatrix::from_fn(p, p, |i, j| if j >= i { r[j - i] } else { r[i - j].conj() })
}

/// `‖P - A P Aᴴ - Q‖_F`.
pub fn lyapunov_residual(ss: &StateSpace, p: &DMatrix<Complex64>) -> f64 {
    let a = ss.a();
    (p - &a * p * a.adjoint() - ss.q()).norm()
}
