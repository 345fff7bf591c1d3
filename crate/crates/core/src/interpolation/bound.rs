use crate::correlation::EigenSpectrum;

/// Eigenvalues at or below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-12;

/// Smallest `M` whose eigenvalue tail `Σ_{i>M} λ_i` is at most `epsilon · Σ λ_i`.
/// `epsilon` is clamped to `[0, 1]`.
pub fn min_observations_bound(spectrum: &EigenSpectrum, epsilon: f64) -> usize {
    let eps = epsilon.clamp(0.0, 1.0);
    let lam = spectrum.eigenvalues();
    let Some(&top) = lam.first() else {
        return 0;
    };
    let cut = RANK_TOLERANCE * top;
    let kept: Vec<f64> = lam.iter().map(|&l| if l > cut { l } else { 0.0 }).collect();
    // Suffix sums from the small end keep the tail accurate.
    let mut tail = vec![0.0; kept.len() + 1];
    for i in (0..kept.len()).rev() {
        tail[i] = tail[i + 1] + kept[i];
    }
    let total = tail[0];
    if !(total > 0.0) {
        return 0;
    }
    (0..=kept.len()).find(|&m| tail[m] <= eps * total).unwrap_or(kept.len())
}
