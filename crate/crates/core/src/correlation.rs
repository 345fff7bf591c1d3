//! Exact Clarke spatial correlation: Toeplitz covariance, its Hermitian
//! eigendecomposition and exact Gaussian channel sampling.
//!
//! The port channel `g = (g_1, ..., g_N)` of a uniform linear aperture of `W`
//! wavelengths is `CN(0, Σ)` with `Σ_ij = σ² sinc(2π (i-j) W / (N-1))` and the
//! unnormalized `sinc(x) = sin(x)/x`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::rng::{complex_normal, derive_seed, stream};
use crate::{Error, Result};

/// Unnormalized cardinal sine, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        // Taylor: 1 - x²/6 is exact to double precision here.
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Clarke's rich-scattering model for an `N`-port linear aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkeModel {
    aperture: f64,
    ports: usize,
    variance: f64,
}

impl ClarkeModel {
    /// `aperture` is `W` in wavelengths, `ports` is `N`, `variance` is the per-port `σ²`.
    pub fn new(aperture: f64, ports: usize, variance: f64) -> Result<Self> {
        if !(aperture.is_finite() && aperture > 0.0) {
            return Err(Error::domain(format!("aperture W must be > 0, got {aperture}")));
        }
        if ports < 2 {
            return Err(Error::domain(format!("port count N must be >= 2, got {ports}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain(format!("variance must be > 0, got {variance}")));
        }
        Ok(Self { aperture, ports, variance })
    }

    /// Unit per-port variance.
    pub fn unit(aperture: f64, ports: usize) -> Result<Self> {
        Self::new(aperture, ports, 1.0)
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// `σ² sinc(2π·lag·W/(N-1))` for `|lag| <= N-1`.
pub fn clarke_autocorrelation(lag: i64, model: &ClarkeModel) -> Result<f64> {
    let max = model.ports as i64 - 1;
    if lag.abs() > max {
        return Err(Error::domain(format!("lag {lag} outside [-{max}, {max}]")));
    }
    let x = 2.0 * std::f64::consts::PI * lag as f64 * model.aperture / max as f64;
    Ok(model.variance * sinc(x))
}

/// Hermitian Toeplitz covariance of a wide-sense stationary port sequence.
///
/// Stored as the autocorrelation lags `r(ℓ) = E[g_k g*_{k-ℓ}]`, `ℓ = 0..N-1`.
/// The materialized matrix is `Σ_ij = E[g_i g_j*] = r(i-j)`, with
/// `r(-ℓ) = r(ℓ)*`; the first column is `r` and the first row is `r*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCovariance {
    lags: Vec<Complex64>,
}

impl ToeplitzCovariance {
    pub fn from_lags(mut lags: Vec<Complex64>) -> Result<Self> {
        let r0 = *lags
            .first()
            .ok_or_else(|| Error::domain("covariance needs at least one lag"))?;
        if !(r0.re.is_finite() && r0.re > 0.0) || r0.im.abs() > 1e-12 * r0.re {
            return Err(Error::domain(format!("r(0) must be real and > 0, got {r0}")));
        }
        if lags.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::domain("covariance lags must be finite"));
        }
        lags[0] = Complex64::new(r0.re, 0.0);
        Ok(Self { lags })
    }

    /// Builds the lags `r(0..n-1)` from an arbitrary autocorrelation callback.
    pub fn from_autocorrelation(n: usize, f: impl Fn(usize) -> Complex64) -> Result<Self> {
        Self::from_lags((0..n).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.lags.len()
    }

    pub fn lags(&self) -> &[Complex64] {
        &self.lags
    }

    pub fn r0(&self) -> f64 {
        self.lags[0].re
    }

    /// First row of the materialized matrix, `r(-ℓ) = r(ℓ)*`.
    pub fn first_row(&self) -> Vec<Complex64> {
        self.lags.iter().map(|z| z.conj()).collect()
    }

    /// `Σ_ij` (0-based).
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        if i >= j {
            self.lags[i - j]
        } else {
            self.lags[j - i].conj()
        }
    }

    pub fn trace(&self) -> f64 {
        self.r0() * self.dim() as f64
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

/// Toeplitz covariance of the Clarke model.
pub fn build_covariance(model: &ClarkeModel) -> ToeplitzCovariance {
    let lags = (0..model.ports)
        .map(|l| {
            let v = clarke_autocorrelation(l as i64, model).expect("lag in range by construction");
            Complex64::new(v, 0.0)
        })
        .collect();
    ToeplitzCovariance { lags }
}

/// Eigenvalues sorted descending (clipped at zero) and the matching unitary eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
    min_raw_eigenvalue: f64,
}

impl EigenSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Column `i` is the eigenvector of `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    /// Smallest eigenvalue before clipping.
    pub fn min_raw_eigenvalue(&self) -> f64 {
        self.min_raw_eigenvalue
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `U Λ^{1/2}`, the coloring transform used for sampling.
    pub fn coloring(&self) -> DMatrix<Complex64> {
        let mut b = self.eigenvectors.clone();
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= Complex64::new(self.eigenvalues[j].sqrt(), 0.0);
        }
        b
    }

    /// `U Λ U^H`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let b = self.coloring();
        &b * b.adjoint()
    }
}

/// Hermitian eigendecomposition of `cov` with eigenvalues clipped at zero and sorted descending.
pub fn eigen_spectrum(cov: &ToeplitzCovariance) -> Result<EigenSpectrum> {
    let n = cov.dim();
    let m = cov.to_matrix();
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 200 * n.max(10)).ok_or_else(|| {
        Error::Numerical(format!(
            "Hermitian eigensolver did not converge for N={n} (r(0)={:.3e})",
            cov.r0()
        ))
    })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite eigenvalues for N={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let min_raw = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_raw < -1e-8 * cov.r0() {
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log::warn!(
            "clipping negative eigenvalue {min_raw:.3e} (r(0)={:.3e}, largest eigenvalue {max:.3e}); covariance is not PSD to working precision",
            cov.r0()
        );
    }
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenSpectrum { eigenvalues, eigenvectors, min_raw_eigenvalue: min_raw })
}

fn colored_row(coloring: &DMatrix<Complex64>, seed: u64, row: usize, out: &mut [Complex64]) {
    let n = coloring.nrows();
    let mut rng = stream(derive_seed(seed, row as u64));
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for j in 0..n {
        let w = complex_normal(&mut rng, 1.0);
        for (o, b) in out.iter_mut().zip(coloring.column(j).iter()) {
            *o += b * w;
        }
    }
}

/// `count` exact channel draws `g = U Λ^{1/2} g₀`, `g₀ ~ CN(0, I)`, one per row
/// of the returned `count × N` matrix. Row `i` depends only on `(seed, i)`.
pub fn sample_exact(spec: &EigenSpectrum, seed: u64, count: usize) -> Result<DMatrix<Complex64>> {
    if count == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let n = spec.dim();
    let b = spec.coloring();
    let rows: Vec<Vec<Complex64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::new(0.0, 0.0); n];
            colored_row(&b, seed, i, &mut row);
            row
        })
        .collect();
    Ok(DMatrix::from_fn(count, n, |i, j| rows[i][j]))
}

/// Selection gains `max_k |g_k|²` of the same draws [`sample_exact`] would produce.
pub fn sample_exact_max_gain(spec: &EigenSpectrum, seed: u64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let n = spec.dim();
    let b = spec.coloring();
    Ok((0..count)
        .into_par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); n],
            |row, i| {
                colored_row(&b, seed, i, row);
                row.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
            },
        )
        .collect())
}

/// Empirical covariance `(1/count) Σ_rows g gᴴ` of row-wise samples.
pub fn empirical_covariance(samples: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let count = samples.nrows() as f64;
    // Rows are samples: Σ̂ = Gᵀ conj(G) / count.
    let gt = samples.transpose();
    let gc: DMatrix<Complex64> = samples.map(|z| z.conj());
    (gt * gc) / Complex64::new(count, 0.0)
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
