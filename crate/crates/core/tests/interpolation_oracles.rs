use fas_core::arfit::{arp_induced_covariance, yule_walker_fit_with, ArpModel, FitOptions};
use fas_core::correlation::{build_covariance, eigen_spectrum, sample_exact, ClarkeModel};
use fas_core::interpolation::*;
use fas_core::rng::{complex_normal, stream};
use fas_core::Complex64;
use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};
use rand::Rng;

fn random_model(rng: &mut impl Rng, p: usize) -> ArpModel {
    let roots: Vec<Complex64> = (0..p)
        .map(|_| Complex64::from_polar(rng.random_range(0.0..0.95), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    ArpModel::from_roots(&roots, rng.random_range(0.1..2.0)).unwrap()
}

fn check_equivalence(model: &ArpModel, p_inf: &nalgebra::DMatrix<Complex64>, obs: &ObservationSet, n: usize) -> (f64, f64) {
    let ss = build_state_space(model).unwrap();
    let k = kalman_smooth(&ss, p_inf, obs, n).unwrap();
    let d = dense_mmse(&arp_induced_covariance(model, n).unwrap(), obs).unwrap();
    let scale = d.means.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let dm = k.means.iter().zip(&d.means).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    let dv = k.variances.iter().zip(&d.variances).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / model.r0();
    (dm, dv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn kalman_equals_dense_on_random_models(seed in 0u64..1_000_000, n in 2usize..200, p in 1usize..40,
                                            frac in 0.0f64..1.0, noisy in prop::bool::ANY) {
        let mut rng = stream(seed);
        let model = random_model(&mut rng, p);
        let m = ((n as f64 * frac) as usize).clamp(1, n);
        let idx = port_select(Strategy::Random, n, m, seed).unwrap();
        let values = (0..m).map(|_| complex_normal(&mut rng, model.r0())).collect();
        let obs = ObservationSet::new(idx, values, if noisy { 1e-2 } else { 0.0 }, n).unwrap();
        let (dm, dv) = check_equivalence(&model, &matched_state_covariance(&model), &obs, n);
        prop_assert!(dm <= 1e-6, "mean discrepancy {}", dm);
        prop_assert!(dv <= 1e-6, "variance discrepancy {}", dv);
    }

    #[test]
    fn extra_observations_never_raise_variance(seed in 0u64..1_000_000, m in 1usize..20) {
        let cov = build_covariance(&ClarkeModel::unit(2.0, 60).unwrap());
        let base = port_select(Strategy::Random, 60, m, seed).unwrap();
        let mut rng = stream(seed ^ 0xabc);
        let extra = rng.random_range(1..=60);
        let mut bigger = base.clone();
        if !bigger.contains(&extra) {
            bigger.push(extra);
            bigger.sort_unstable();
        }
        let zeros = |k: usize| vec![Complex64::new(0.0, 0.0); k];
        let v0 = dense_mmse(&cov, &ObservationSet::new(base.clone(), zeros(base.len()), 1e-3, 60).unwrap()).unwrap().variances;
        let v1 = dense_mmse(&cov, &ObservationSet::new(bigger.clone(), zeros(bigger.len()), 1e-3, 60).unwrap()).unwrap().variances;
        for k in 0..60 {
            prop_assert!(v1[k] <= v0[k] + 1e-12);
        }
    }
}

#[test]
fn kalman_equals_dense_on_clarke_fit() {
    let lags = build_covariance(&ClarkeModel::unit(2.0, 100).unwrap()).lags()[..=20].to_vec();
    let model = yule_walker_fit_with(&lags, &FitOptions::regularized()).unwrap();
    let idx = port_select(Strategy::UniformEndpoints, 100, 20, 0).unwrap();
    let mut rng = stream(3);
    let values: Vec<_> = (0..20).map(|_| complex_normal(&mut rng, 1.0)).collect();
    for noise in [0.0, 1e-2] {
        let obs = ObservationSet::new(idx.clone(), values.clone(), noise, 100).unwrap();
        let (dm, dv) = check_equivalence(&model, &matched_state_covariance(&model), &obs, 100);
        assert!(dm <= 1e-6 && dv <= 1e-6, "noise {noise}: {dm} {dv}");
    }
}

#[test]
fn monte_carlo_nmse_matches_theory() {
    let cov = build_covariance(&ClarkeModel::unit(2.0, 100).unwrap());
    let spec = eigen_spectrum(&cov).unwrap();
    let idx = port_select(Strategy::UniformEndpoints, 100, 6, 0).unwrap();
    let truths = sample_exact(&spec, 21, 1000).unwrap();
    let mut noise_rng = stream(22);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut theory = 0.0;
    for row in truths.row_iter() {
        let truth: Vec<Complex64> = row.iter().copied().collect();
        let obs = ObservationSet::observe(&truth, idx.clone(), 1e-2, &mut || complex_normal(&mut noise_rng, 1.0)).unwrap();
        let res = dense_mmse(&cov, &obs).unwrap();
        let u = obs.unobserved(100);
        num += u.iter().map(|&k| (res.means[k - 1] - truth[k - 1]).norm_sqr()).sum::<f64>();
        den += u.iter().map(|&k| truth[k - 1].norm_sqr()).sum::<f64>();
        theory = res.nmse_unobserved;
        assert!(nmse(&truth, &res.means, &u).unwrap() >= 0.0);
    }
    // Pooled ratio: the per-trial ratio of energies is a biased estimator of tr(C_UU)/tr(Σ_UU).
    let empirical = num / den;
    assert!((empirical / theory - 1.0).abs() < 0.05, "empirical {empirical} theory {theory}");
}

#[test]
fn tail_bound_never_exceeds_attained_nmse() {
    let cov = build_covariance(&ClarkeModel::unit(2.0, 100).unwrap());
    let spec = eigen_spectrum(&cov).unwrap();
    let lam = spec.eigenvalues();
    for m in [2usize, 4, 6, 8, 12, 20] {
        let tail: f64 = lam[m..].iter().sum::<f64>() / spec.total();
        for s in Strategy::ALL {
            for seed in 0..5 {
                let idx = port_select(s, 100, m, seed).unwrap();
                let obs = ObservationSet::new(idx, vec![Complex64::new(0.0, 0.0); m], 0.0, 100).unwrap();
                let attained = dense_mmse(&cov, &obs).unwrap().nmse_unobserved;
                assert!(attained >= tail * (1.0 - 1e-6) - 1e-15, "{s} M={m}: {attained} < {tail}");
            }
        }
    }
}

#[test]
fn uniform_beats_random_on_average() {
    let cov = build_covariance(&ClarkeModel::unit(2.0, 50).unwrap());
    let theory = |s: Strategy, seed: u64| {
        let idx = port_select(s, 50, 10, seed).unwrap();
        dense_mmse(&cov, &ObservationSet::new(idx, vec![Complex64::new(0.0, 0.0); 10], 0.0, 50).unwrap())
            .unwrap()
            .nmse_unobserved
    };
    let uniform = theory(Strategy::UniformEndpoints, 0);
    let random: f64 = (0..500).map(|s| theory(Strategy::Random, s)).sum::<f64>() / 500.0;
    assert!(uniform <= random, "{uniform} vs {random}");
}

#[test]
fn random_gap_law() {
    let (n, m) = (10_000usize, 100usize);
    let trials = 200;
    let mean = (0..trials).map(|s| max_gap(&port_select(Strategy::Random, n, m, s).unwrap(), n) as f64).sum::<f64>()
        / trials as f64;
    let ratio = mean / ((n as f64 / m as f64) * (m as f64).ln());
    assert!((0.6..=1.5).contains(&ratio), "ratio {ratio}");
}
