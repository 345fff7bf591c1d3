use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::state_space::StateSpace;
use super::{Method, ObservationSet, ReconstructionResult};
use crate::{Error, Result};

const RTS_JITTER: f64 = 1e-12;

fn hermitize(m: &mut DMatrix<Complex64>) {
    let p = m.nrows();
    for i in 0..p {
        m[(i, i)].im = 0.0;
        for j in i + 1..p {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

fn finite(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Kalman filter plus Rauch-Tung-Striebel smoother on the AR(p) state space,
/// started from `s_1 ~ CN(0, P∞)`. Prediction and filtering cost `O(p²)` per
/// port through the companion structure; the smoother gain costs one `p × p`
/// Cholesky solve per port, so the run is linear in `N`.
pub fn kalman_smooth(
    ss: &StateSpace,
    p_inf: &DMatrix<Complex64>,
    obs: &ObservationSet,
    n: usize,
) -> Result<ReconstructionResult> {
    let p = ss.order();
    if p_inf.shape() != (p, p) {
        return Err(Error::domain(format!("P∞ must be {p}×{p}")));
    }
    if n == 0 || obs.indices().last().is_some_and(|&k| k > n) {
        return Err(Error::domain(format!("observation index exceeds N = {n}")));
    }
    let r0 = p_inf[(0, 0)].re;
    let noise = obs.effective_noise(r0);

    let mut filt_m = vec![Complex64::new(0.0, 0.0); n * p];
    let mut filt_p: Vec<DMatrix<Complex64>> = Vec::with_capacity(n);

    let mut pred_m = vec![Complex64::new(0.0, 0.0); p];
    let mut pred_p = p_inf.clone();
    let mut next = 0;
    for k in 0..n {
        if k > 0 {
            let prev = &filt_m[(k - 1) * p..k * p];
            ss.propagate_mean(prev, &mut pred_m);
            ss.propagate_cov(&filt_p[k - 1], &mut pred_p);
            pred_p[(0, 0)].re += ss.sigma_eps2();
        }
        let mut m = pred_m.clone();
        let mut cov = pred_p.clone();
        if next < obs.len() && obs.indices()[next] == k + 1 {
            let y = obs.values()[next];
            next += 1;
            let s = cov[(0, 0)].re + noise;
            let col: Vec<Complex64> = (0..p).map(|i| cov[(i, 0)]).collect();
            let innov = y - m[0];
            for i in 0..p {
                m[i] += col[i] * innov / s;
            }
            // (I - K H) P with K = P[:,0] / s.
            for j in 0..p {
                let h = cov[(0, j)];
                for i in 0..p {
                    cov[(i, j)] -= col[i] * h / s;
                }
            }
        }
        hermitize(&mut cov);
        if !finite(&cov) || m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { stage: "kalman filter", port: k + 1 });
        }
        filt_m[k * p..(k + 1) * p].copy_from_slice(&m);
        filt_p.push(cov);
    }

    let mut means = vec![Complex64::new(0.0, 0.0); n];
    let mut variances = vec![0.0; n];
    let mut sm_m = DVector::from_column_slice(&filt_m[(n - 1) * p..]);
    let mut sm_p = filt_p[n - 1].clone();
    means[n - 1] = sm_m[0];
    variances[n - 1] = sm_p[(0, 0)].re.max(0.0);

    let mut pp = DMatrix::zeros(p, p);
    let mut mp = vec![Complex64::new(0.0, 0.0); p];
    for k in (0..n - 1).rev() {
        let fm = &filt_m[k * p..(k + 1) * p];
        let fp = &filt_p[k];
        ss.propagate_mean(fm, &mut mp);
        ss.propagate_cov(fp, &mut pp);
        pp[(0, 0)].re += ss.sigma_eps2();
        // A P_{k|k}: first row αᵀ P, then P shifted down.
        let ap = DMatrix::from_fn(p, p, |i, j| {
            if i == 0 {
                (0..p).map(|l| ss.alpha()[l] * fp[(l, j)]).sum()
            } else {
                fp[(i - 1, j)]
            }
        });
        let chol = match nalgebra::Cholesky::new(pp.clone()) {
            Some(c) => c,
            None => {
                let jitter = RTS_JITTER * pp.trace().re;
                let mut loaded = pp.clone();
                for i in 0..p {
                    loaded[(i, i)].re += jitter;
                }
                nalgebra::Cholesky::new(loaded).ok_or(Error::NonFinite { stage: "smoother gain", port: k + 1 })?
            }
        };
        // Gᴴ = P_{k+1|k}⁻¹ A P_{k|k}.
        let gain = chol.solve(&ap).adjoint();
        let dm = &sm_m - DVector::from_column_slice(&mp);
        let new_m = DVector::from_column_slice(fm) + &gain * dm;
        let mut new_p = fp + &gain * (&sm_p - &pp) * gain.adjoint();
        hermitize(&mut new_p);
        if !finite(&new_p) {
            return Err(Error::NonFinite { stage: "smoother", port: k + 1 });
        }
        means[k] = new_m[0];
        variances[k] = new_p[(0, 0)].re.max(0.0);
        sm_m = new_m;
        sm_p = new_p;
    }

    let unobserved = obs.unobserved(n);
    let nmse_unobserved = if unobserved.is_empty() {
        0.0
    } else {
        unobserved.iter().map(|&k| variances[k - 1]).sum::<f64>() / (unobserved.len() as f64 * r0)
    };
    Ok(ReconstructionResult { means, variances, nmse_unobserved, method: Method::Kalman })
}
