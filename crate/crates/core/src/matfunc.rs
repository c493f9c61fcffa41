//! Matrix-function oracles: Lanczos `exp(B) x`, Chebyshev actions and
//! power iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracle::{check_len, MatVecOracle};
use crate::rng::{stream_rng, tags};

/// Lanczos iterations per `exp(B) g` product.
pub const DEFAULT_LANCZOS_STEPS: usize = 15;
pub const DEFAULT_MARGIN: f64 = 1.05;
const BREAKDOWN_TOL: f64 = 1e-12;

/// `k` steps of Lanczos started at `x / |x|`: `B V = V T + beta_k v_{k+1} e_k^T`.
#[derive(Clone, Debug)]
pub struct LanczosDecomposition {
    /// `n x k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub alphas: Vec<f64>,
    /// Off-diagonal of `T`, length `k - 1`.
    pub betas: Vec<f64>,
    pub start_norm: f64,
}

impl LanczosDecomposition {
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.steps();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = self.alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = self.betas[i];
                t[(i + 1, i)] = self.betas[i];
            }
        }
        t
    }

    /// `|x| V f(T) e_1` with `f` applied through the eigendecomposition of `T`.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
        let n = self.basis.nrows();
        if self.steps() == 0 {
            return Ok(DVector::zeros(n));
        }
        let eig = SymmetricEigen::new(self.tridiagonal());
        let u = &eig.eigenvectors;
        let coeffs = DVector::from_fn(self.steps(), |i, _| {
            (0..self.steps())
                .map(|c| u[(i, c)] * f(eig.eigenvalues[c]) * u[(0, c)])
                .sum::<f64>()
        });
        let out = &self.basis * coeffs * self.start_norm;
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Breakdown("non-finite Lanczos function value".into()))
        }
    }
}

/// Lanczos with full reorthogonalization. `k` is capped at `n`; iteration
/// stops early when the next `beta` falls below `1e-12` of the running
/// scale of `T`.
pub fn lanczos(oracle: &dyn MatVecOracle, x: &[f64], k: usize) -> Result<LanczosDecomposition> {
    let n = oracle.dim();
    check_len(n, x.len())?;
    if k == 0 {
        return Err(Error::invalid("Lanczos needs at least one iteration"));
    }
    let k = k.min(n);
    let start_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !start_norm.is_finite() {
        return Err(Error::NonFinite);
    }
    if start_norm == 0.0 {
        return Ok(LanczosDecomposition {
            basis: DMatrix::zeros(n, 0),
            alphas: Vec::new(),
            betas: Vec::new(),
            start_norm,
        });
    }

    let mut basis = DMatrix::zeros(n, k);
    basis.set_column(
        0,
        &DVector::from_iterator(n, x.iter().map(|v| v / start_norm)),
    );
    let (mut alphas, mut betas) = (Vec::with_capacity(k), Vec::with_capacity(k));
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;
    for i in 0..k {
        oracle.apply_into(basis.column(i).as_slice(), &mut w);
        let mut wv = DVector::from_column_slice(&w);
        let alpha = basis.column(i).dot(&wv);
        if !alpha.is_finite() {
            return Err(Error::Breakdown(format!(
                "non-finite alpha at step {}",
                i + 1
            )));
        }
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        if i + 1 == k {
            break;
        }
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            let v = basis.columns(0, i + 1);
            let h = v.tr_mul(&wv);
            wv -= v * h;
        }
        let beta = wv.norm();
        if !beta.is_finite() {
            return Err(Error::Breakdown(format!(
                "non-finite beta at step {}",
                i + 1
            )));
        }
        if beta <= BREAKDOWN_TOL * scale.max(1.0) {
            break;
        }
        scale = scale.max(beta);
        betas.push(beta);
        basis.set_column(i + 1, &(wv / beta));
    }
    let used = alphas.len();
    Ok(LanczosDecomposition {
        basis: basis.columns(0, used).into_owned(),
        alphas,
        betas,
        start_norm,
    })
}

/// Approximates `exp(B) x` from `k` Lanczos steps.
pub fn lanczos_expm_apply(oracle: &dyn MatVecOracle, x: &[f64], k: usize) -> Result<DVector<f64>> {
    lanczos(oracle, x, k)?.apply_function(f64::exp)
}

/// `x -> exp(B) x` by Lanczos; one apply costs `k` products with `B`.
///
/// `apply_into` cannot report errors; a Lanczos breakdown with non-finite
/// values fills the output with NaN.
#[derive(Clone, Debug)]
pub struct LanczosExpOracle<O> {
    base: O,
    steps: usize,
}

impl<O: MatVecOracle> LanczosExpOracle<O> {
    pub fn new(base: O, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("Lanczos needs at least one iteration"));
        }
        Ok(Self { base, steps })
    }

    pub fn base(&self) -> &O {
        &self.base
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl<O: MatVecOracle> MatVecOracle for LanczosExpOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn matvec_cost(&self) -> u64 {
        self.steps as u64 * self.base.matvec_cost()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match lanczos_expm_apply(&self.base, x, self.steps) {
            Ok(v) => y.copy_from_slice(v.as_slice()),
            Err(_) => y.fill(f64::NAN),
        }
    }
}

/// `|B x| / |x|` after `iters` normalized iterations from a seeded Gaussian
/// start; a lower bound on the spectral radius. Returns 0 when the iterate
/// is annihilated.
pub fn power_iteration(oracle: &dyn MatVecOracle, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::invalid(
            "power iteration needs at least one iteration",
        ));
    }
    let n = oracle.dim();
    let mut rng = stream_rng(seed, 0, tags::POWER);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iters {
        let xn = norm(&x);
        if xn == 0.0 {
            return Ok(0.0);
        }
        oracle.apply_into(&x, &mut y);
        let yn = norm(&y);
        if !yn.is_finite() {
            return Err(Error::NonFinite);
        }
        estimate = yn / xn;
        if yn == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / yn;
        }
    }
    Ok(estimate)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `H~ = H / (margin * lambda_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChebyshevScaling {
    pub lambda_max: f64,
    pub margin: f64,
}

impl ChebyshevScaling {
    pub fn new(lambda_max: f64, margin: f64) -> Result<Self> {
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(Error::invalid(format!(
                "lambda_max must be positive, got {lambda_max}"
            )));
        }
        if !(margin.is_finite() && margin >= 1.0) {
            return Err(Error::invalid(format!("margin must be >= 1, got {margin}")));
        }
        Ok(Self { lambda_max, margin })
    }

    /// Power iteration on `oracle`, inflated by `margin`.
    pub fn estimate(
        oracle: &dyn MatVecOracle,
        iters: usize,
        seed: u64,
        margin: f64,
    ) -> Result<Self> {
        Self::new(power_iteration(oracle, iters, seed)?, margin)
    }

    pub fn divisor(&self) -> f64 {
        self.margin * self.lambda_max
    }
}

/// `T_q(x)` by the three-term recurrence.
pub fn chebyshev_scalar(q: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for _ in 1..q {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[T_0(H~) x, ..., T_{q_max}(H~) x]` using `q_max` applies of the base oracle.
pub fn chebyshev_actions(
    oracle: &dyn MatVecOracle,
    scaling: ChebyshevScaling,
    x: &[f64],
    q_max: usize,
) -> Result<Vec<Vec<f64>>> {
    check_len(oracle.dim(), x.len())?;
    let block = DMatrix::from_column_slice(x.len(), 1, x);
    Ok(chebyshev_block(oracle, scaling, &block, q_max)
        .into_iter()
        .map(|m| m.as_slice().to_vec())
        .collect())
}

fn chebyshev_block(
    oracle: &dyn MatVecOracle,
    scaling: ChebyshevScaling,
    x: &DMatrix<f64>,
    q_max: usize,
) -> Vec<DMatrix<f64>> {
    let inv = 1.0 / scaling.divisor();
    let mut out = Vec::with_capacity(q_max + 1);
    out.push(x.clone());
    for q in 1..=q_max {
        let mut h = oracle.apply_block(&out[q - 1]);
        h *= inv;
        let next = if q == 1 { h } else { h * 2.0 - &out[q - 2] };
        out.push(next);
    }
    out
}

/// `x -> T_q(H~) x`; one apply costs `q` products with `H`.
#[derive(Clone, Debug)]
pub struct ChebyshevOracle<O> {
    base: O,
    scaling: ChebyshevScaling,
    degree: usize,
}

impl<O: MatVecOracle> ChebyshevOracle<O> {
    pub fn new(base: O, scaling: ChebyshevScaling, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("Chebyshev oracle degree must be at least 1"));
        }
        Ok(Self {
            base,
            scaling,
            degree,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
}

impl<O: MatVecOracle> MatVecOracle for ChebyshevOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn matvec_cost(&self) -> u64 {
        self.degree as u64 * self.base.matvec_cost()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let block = DMatrix::from_column_slice(x.len(), 1, x);
        let out = self.apply_block(&block);
        y.copy_from_slice(out.as_slice());
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        chebyshev_block(&self.base, self.scaling, x, self.degree)
            .pop()
            .expect("degree >= 1")
    }
}
