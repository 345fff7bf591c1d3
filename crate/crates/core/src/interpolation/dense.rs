use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Method, ObservationSet, ReconstructionResult};
use crate::correlation::ToeplitzCovariance;
use crate::{Error, Result};

/// Gaussian MMSE reconstruction with the full covariance as prior:
/// `ĝ = Σ_{:,𝒪} (Σ_{𝒪𝒪} + σ_v² I)⁻¹ y` and the diagonal of the error covariance.
pub fn dense_mmse(cov: &ToeplitzCovariance, obs: &ObservationSet) -> Result<ReconstructionResult> {
    let n = cov.dim();
    if obs.indices().last().is_some_and(|&k| k > n) {
        return Err(Error::domain(format!("observation index exceeds N = {n}")));
    }
    let idx: Vec<usize> = obs.indices().iter().map(|k| k - 1).collect();
    let m = idx.len();
    let noise = obs.effective_noise(cov.r0());

    let gram = DMatrix::from_fn(m, m, |a, b| {
        let v = cov.entry(idx[a], idx[b]);
        if a == b {
            v + noise
        } else {
            v
        }
    });
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::Numerical("observation Gram matrix is not positive definite; raise the noise floor".into())
    })?;
    // Σ_{𝒪,:}
    let cross = DMatrix::from_fn(m, n, |a, k| cov.entry(idx[a], k));
    let y = DVector::from_column_slice(obs.values());
    let weights = chol.solve(&y);
    let means: Vec<Complex64> = (0..n).map(|k| (0..m).map(|a| cross[(a, k)].conj() * weights[a]).sum()).collect();

    // diag(Σ - Σ_{:,𝒪} C⁻¹ Σ_{𝒪,:}) = Σ_kk - ‖L⁻¹ Σ_{𝒪,k}‖².
    let mut whitened = cross;
    if !chol.l().solve_lower_triangular_mut(&mut whitened) {
        return Err(Error::Numerical("singular Cholesky factor of the observation Gram matrix".into()));
    }
    let r0 = cov.r0();
    let variances: Vec<f64> = (0..n)
        .map(|k| (r0 - whitened.column(k).norm_squared()).max(0.0))
        .collect();

    let unobserved = obs.unobserved(n);
    let nmse_unobserved = if unobserved.is_empty() {
        0.0
    } else {
        unobserved.iter().map(|&k| variances[k - 1]).sum::<f64>() / (unobserved.len() as f64 * r0)
    };
    if means.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
        return Err(Error::NonFinite { stage: "dense mean", port: 0 });
    }
    Ok(ReconstructionResult { means, variances, nmse_unobserved, method: Method::Oracle })
}
