use dyntrace::estimators::{
    deltashift_fixed_step, deltashift_init, hutchinson, hutchinson_exact_variance, optimal_gamma,
    DynamicEstimator, EstimatorKind, EstimatorPlan, GammaMode, GammaProbes, PlusPlusOptions,
};
use dyntrace::oracle::dense_oracle;
use dyntrace::probes::rademacher_batch;
use dyntrace::synth::random_symmetric;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Tracked variance as a function of `gamma`, written out term by term.
fn tracked_variance(gamma: f64, c: f64, n: f64, m: f64, v: f64, ell: usize) -> f64 {
    let k = 1.0 - gamma;
    k * k * v + 2.0 / ell as f64 * (m + k * k * n - 2.0 * k * c)
}

proptest! {
    #[test]
    fn optimal_gamma_beats_grid(
        n in 0.0f64..10.0,
        m in 0.0f64..10.0,
        rho in -1.0f64..1.0,
        v in 0.0f64..5.0,
        ell in 1usize..50,
    ) {
        // Cauchy-Schwarz keeps the quadratic convex: |C| <= sqrt(M N)
        let c = rho * (m * n).sqrt();
        let g = optimal_gamma(c, n, v, ell);
        prop_assert!((0.0..=1.0).contains(&g));
        let best = tracked_variance(g, c, n, m, v, ell);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            prop_assert!(best <= tracked_variance(x, c, n, m, v, ell) + 1e-9 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn gamma_one_is_fresh_hutchinson(seed in 0u64..1000, ell in 1usize..12) {
        let a = random_symmetric(12, seed);
        let b = random_symmetric(12, seed + 1);
        let (oa, ob) = (dense_oracle(a).unwrap(), dense_oracle(b).unwrap());
        let mut s = deltashift_init(&oa, 4, seed, GammaMode::Fixed(1.0)).unwrap();
        let out = deltashift_fixed_step(&mut s, &oa, &ob, ell, 1.0).unwrap();
        let fresh = hutchinson(&ob, ell, &rademacher_batch(seed, 2, ell, 12)).unwrap();
        prop_assert!((out.estimate - fresh).abs() <= 1e-12 * (1.0 + fresh.abs()));
    }

    #[test]
    fn diagonal_matrices_are_exact(diag in prop::collection::vec(-5.0f64..5.0, 1..20), ell in 1usize..6) {
        let n = diag.len();
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
        let est = hutchinson(&dense_oracle(a.clone()).unwrap(), ell, &rademacher_batch(1, 1, ell, n)).unwrap();
        let tr: f64 = diag.iter().sum();
        prop_assert!((est - tr).abs() <= 1e-12 * (1.0 + tr.abs()));
        prop_assert_eq!(hutchinson_exact_variance(&a, ell), 0.0);
    }

    #[test]
    fn estimators_are_deterministic(kind_idx in 0usize..6, seed in 0u64..500) {
        let kind = EstimatorKind::ALL[kind_idx];
        let mats: Vec<_> = (0..4).map(|j| random_symmetric(10, 40 + j)).collect();
        let run = || {
            let plan = EstimatorPlan {
                kind,
                ell0: 16,
                ell: 16,
                gamma: Some(0.4),
                restart_every: 2,
                plusplus: PlusPlusOptions::default(),
                gamma_probes: GammaProbes::default(),
            };
            let mut est = DynamicEstimator::new(plan, seed).unwrap();
            let oracles: Vec<_> = mats.iter().map(|m| dense_oracle(m.clone()).unwrap()).collect();
            let mut out = Vec::new();
            for j in 0..oracles.len() {
                let prev = if j > 0 { Some(&oracles[j - 1] as _) } else { None };
                out.push(est.step(prev, &oracles[j]).unwrap().estimate.to_bits());
            }
            out
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn hutchinson_variance_matches_monte_carlo() {
    let a = random_symmetric(8, 3);
    let o = dense_oracle(a.clone()).unwrap();
    let trials = 40_000;
    let samples: Vec<f64> = (0..trials)
        .map(|s| hutchinson(&o, 2, &rademacher_batch(s, 1, 2, 8)).unwrap())
        .collect();
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let exact = hutchinson_exact_variance(&a, 2);
    assert!((var / exact - 1.0).abs() < 0.05, "{var} vs {exact}");
    assert!((mean - a.trace()).abs() < 5.0 * (exact / trials as f64).sqrt());
}

#[test]
fn shared_and_held_out_agree_on_identical_matrices() {
    // with A_j = A_{j-1} every residual is gamma * A g; the estimate stays
    // a convex combination of unbiased pieces and is finite in both modes
    let a = random_symmetric(10, 8);
    let o = dense_oracle(a.clone()).unwrap();
    for probes in [GammaProbes::HeldOut, GammaProbes::Shared] {
        let plan = EstimatorPlan {
            kind: EstimatorKind::DeltashiftAuto,
            ell0: 9,
            ell: 9,
            gamma: None,
            restart_every: 1,
            plusplus: PlusPlusOptions::default(),
            gamma_probes: probes,
        };
        let mut est = DynamicEstimator::new(plan, 2).unwrap();
        est.step(None, &o).unwrap();
        for _ in 0..5 {
            let out = est.step(Some(&o), &o).unwrap();
            assert!(out.estimate.is_finite());
            assert!((0.0..=1.0).contains(&out.gamma.unwrap()));
        }
    }
}

#[test]
fn held_out_auto_rejects_single_probe_plans() {
    let plan = EstimatorPlan {
        kind: EstimatorKind::DeltashiftAuto,
        ell0: 4,
        ell: 1,
        gamma: None,
        restart_every: 1,
        plusplus: PlusPlusOptions::default(),
        gamma_probes: GammaProbes::HeldOut,
    };
    assert!(DynamicEstimator::new(plan, 0).is_err());
    let shared = EstimatorPlan {
        gamma_probes: GammaProbes::Shared,
        ..plan
    };
    assert!(DynamicEstimator::new(shared, 0).is_ok());
}
