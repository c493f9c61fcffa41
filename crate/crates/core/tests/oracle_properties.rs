use dyntrace::matfunc::{chebyshev_scalar, lanczos_expm_apply};
use dyntrace::oracle::{
    counted, dense_oracle, materialize, power_oracle, DiagonalOracle, DifferenceOracle,
    IdentityOracle, MatVecLedger, MatVecOracle,
};
use dyntrace::rng::stream_rng;
use dyntrace::synth::random_symmetric;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0, 7);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = 1.0 + b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn check_linear(o: &dyn MatVecOracle, seed: u64, alpha: f64, beta: f64) -> bool {
    let n = o.dim();
    let (x, y) = (random_vec(n, seed), random_vec(n, seed + 1));
    let combo: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(a, b)| alpha * a + beta * b)
        .collect();
    let (ox, oy) = (o.apply(&x).unwrap(), o.apply(&y).unwrap());
    let expected: Vec<f64> = ox
        .iter()
        .zip(&oy)
        .map(|(a, b)| alpha * a + beta * b)
        .collect();
    close(&o.apply(&combo).unwrap(), &expected, 1e-10)
}

proptest! {
    #[test]
    fn oracles_are_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let a = dense_oracle(random_symmetric(9, seed)).unwrap();
        let b = dense_oracle(random_symmetric(9, seed + 100)).unwrap();
        let diag = DiagonalOracle { diag: random_vec(9, seed) };
        let p = power_oracle(a.clone(), 3).unwrap();
        let d = DifferenceOracle { cur: &a, prev: &b };
        let id = IdentityOracle { n: 9 };
        prop_assert!(check_linear(&a, seed, alpha, beta));
        prop_assert!(check_linear(&diag, seed, alpha, beta));
        prop_assert!(check_linear(&id, seed, alpha, beta));
        prop_assert!(check_linear(&p, seed, alpha, beta));
        prop_assert!(check_linear(&d, seed, alpha, beta));
    }

    #[test]
    fn power_oracle_matches_dense_power(seed in 0u64..1000, p in 1u32..5) {
        let a = random_symmetric(8, seed) * 0.5;
        let o = power_oracle(dense_oracle(a.clone()).unwrap(), p).unwrap();
        prop_assert_eq!(o.matvec_cost(), p as u64);
        let mut expected = DMatrix::identity(8, 8);
        for _ in 0..p {
            expected = &expected * &a;
        }
        let got = materialize(&o);
        prop_assert!((got - &expected).norm() <= 1e-10 * (1.0 + expected.norm()));
    }

    #[test]
    fn block_and_single_applies_agree(seed in 0u64..1000, cols in 1usize..6) {
        let a = dense_oracle(random_symmetric(7, seed)).unwrap();
        let p = power_oracle(a, 2).unwrap();
        let x = DMatrix::from_fn(7, cols, |i, j| ((i * 3 + j * 5 + seed as usize) % 7) as f64 - 3.0);
        let block = p.apply_block(&x);
        for j in 0..cols {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let single = p.apply(&col).unwrap();
            prop_assert!(close(&single, block.column(j).as_slice(), 1e-12));
        }
    }

    #[test]
    fn ledger_weights_by_cost(calls in 1usize..20, p in 1u32..4) {
        let a = power_oracle(dense_oracle(random_symmetric(5, 1)).unwrap(), p).unwrap();
        let ledger = MatVecLedger::new();
        let c = counted(&a, &ledger, 3);
        for i in 0..calls {
            c.apply(&random_vec(5, i as u64)).unwrap();
        }
        prop_assert_eq!(ledger.oracle_calls(), calls as u64);
        prop_assert_eq!(ledger.calls_at(3), calls as u64);
        prop_assert_eq!(ledger.total_base_matvecs(), calls as u64 * p as u64);
    }

    #[test]
    fn chebyshev_matches_trigonometric_form(q in 0usize..12, x in -1.0f64..1.0) {
        let expected = (q as f64 * x.acos()).cos();
        prop_assert!((chebyshev_scalar(q, x) - expected).abs() < 1e-10);
    }
}

#[test]
fn wrong_length_is_rejected() {
    let a = dense_oracle(random_symmetric(4, 2)).unwrap();
    assert!(a.apply(&[1.0; 3]).is_err());
}

#[test]
fn full_lanczos_reproduces_exponential() {
    let n = 15;
    let a = random_symmetric(n, 12) * 0.3;
    let x = random_vec(n, 5);
    let eig = SymmetricEigen::new(a.clone());
    let exp_a = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp))
        * eig.eigenvectors.transpose();
    let expected = &exp_a * DVector::from_vec(x.clone());
    let got = lanczos_expm_apply(&dense_oracle(a).unwrap(), &x, n).unwrap();
    assert!((got - &expected).norm() < 1e-9 * expected.norm());
}
