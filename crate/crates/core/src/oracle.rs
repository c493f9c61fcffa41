//! Matrix-vector product oracles.
//!
//! An oracle is an implicit `n x n` linear operator that can only be touched
//! through `x -> Ax`. Every oracle reports a `matvec_cost`: the number of
//! base-matrix multiplications one application consumes (a `B^3` oracle
//! costs 3). [`Counted`] routes applications through a [`MatVecLedger`].

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Implicit square linear operator.
///
/// Implementations must be deterministic: identical inputs give
/// bit-identical outputs within one process.
pub trait MatVecOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Base-matrix multiplications consumed by one application.
    fn matvec_cost(&self) -> u64 {
        1
    }

    /// Writes `A x` into `y`. Both slices have length `dim()`; callers are
    /// expected to have checked this (see [`MatVecOracle::apply`]).
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// Applies the operator to every column of `x`.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        debug_assert_eq!(x.nrows(), n);
        let mut y = DMatrix::zeros(n, x.ncols());
        for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
            let xs: Vec<f64> = xc.iter().copied().collect();
            self.apply_into(&xs, yc.as_mut_slice());
        }
        y
    }

    /// Checked single application.
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

macro_rules! forward_oracle {
    ($($ptr:ty),*) => {$(
        impl<T: MatVecOracle + ?Sized> MatVecOracle for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn matvec_cost(&self) -> u64 {
                (**self).matvec_cost()
            }
            fn apply_into(&self, x: &[f64], y: &mut [f64]) {
                (**self).apply_into(x, y)
            }
            fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
                (**self).apply_block(x)
            }
        }
    )*};
}

forward_oracle!(&T, Box<T>, Arc<T>);

/// Dense matrix oracle.
#[derive(Clone, Debug)]
pub struct DenseOracle {
    matrix: Arc<DMatrix<f64>>,
}

impl DenseOracle {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::from_shared(Arc::new(matrix))
    }

    pub fn from_shared(matrix: Arc<DMatrix<f64>>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Builds a dense oracle; `matvec_cost` is 1.
pub fn dense_oracle(matrix: DMatrix<f64>) -> Result<DenseOracle> {
    DenseOracle::new(matrix)
}

impl MatVecOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &self.matrix.as_slice()[j * n..(j + 1) * n];
            for (yi, &a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &*self.matrix * x
    }
}

/// The identity operator. Useful as `p = 0` stand-in for [`power_oracle`].
#[derive(Clone, Copy, Debug)]
pub struct IdentityOracle {
    pub n: usize,
}

impl MatVecOracle for IdentityOracle {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone()
    }
}

/// Diagonal operator, stored as its diagonal.
#[derive(Clone, Debug)]
pub struct DiagonalOracle {
    pub diag: Vec<f64>,
}

impl MatVecOracle for DiagonalOracle {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = d * xi;
        }
    }
}

/// `base` applied `p` times in sequence.
#[derive(Clone, Debug)]
pub struct PowerOracle<O> {
    base: O,
    p: u32,
}

pub fn power_oracle<O: MatVecOracle>(base: O, p: u32) -> Result<PowerOracle<O>> {
    if p == 0 {
        return Err(Error::invalid(
            "power must be at least 1; use IdentityOracle for p = 0",
        ));
    }
    Ok(PowerOracle { base, p })
}

impl<O: MatVecOracle> PowerOracle<O> {
    pub fn base(&self) -> &O {
        &self.base
    }
}

impl<O: MatVecOracle> MatVecOracle for PowerOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn matvec_cost(&self) -> u64 {
        self.p as u64 * self.base.matvec_cost()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply_into(x, y);
        let mut tmp = vec![0.0; x.len()];
        for _ in 1..self.p {
            tmp.copy_from_slice(y);
            self.base.apply_into(&tmp, y);
        }
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.base.apply_block(x);
        for _ in 1..self.p {
            y = self.base.apply_block(&y);
        }
        y
    }
}

/// Implicit difference `cur - prev` of two oracles. Never materialized; one
/// application costs one application of each side.
pub struct DifferenceOracle<'a> {
    pub cur: &'a dyn MatVecOracle,
    pub prev: &'a dyn MatVecOracle,
}

impl MatVecOracle for DifferenceOracle<'_> {
    fn dim(&self) -> usize {
        self.cur.dim()
    }

    fn matvec_cost(&self) -> u64 {
        self.cur.matvec_cost() + self.prev.matvec_cost()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let mut z = vec![0.0; x.len()];
        self.cur.apply_into(x, y);
        self.prev.apply_into(x, &mut z);
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi -= zi;
        }
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.cur.apply_block(x) - self.prev.apply_block(x)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LedgerSnapshot {
    /// Oracle applications (the unit budgets are expressed in).
    pub oracle_calls: u64,
    /// Base-matrix multiplications, `oracle_calls` weighted by cost.
    pub total_base_matvecs: u64,
    /// Oracle applications per step (index 0 is step 1).
    pub calls_per_step: Vec<u64>,
    /// Base multiplications per step (index 0 is step 1).
    pub per_step: Vec<u64>,
}

/// Thread-safe matvec accounting.
#[derive(Debug, Default)]
pub struct MatVecLedger {
    inner: Mutex<LedgerSnapshot>,
}

impl MatVecLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charges `calls` applications of a cost-`cost` oracle to `step` (1-based).
    pub fn record(&self, step: usize, calls: u64, cost: u64) {
        let mut s = self.inner.lock().expect("ledger poisoned");
        let idx = step.saturating_sub(1);
        if s.per_step.len() <= idx {
            s.per_step.resize(idx + 1, 0);
            s.calls_per_step.resize(idx + 1, 0);
        }
        s.oracle_calls += calls;
        s.total_base_matvecs += calls * cost;
        s.calls_per_step[idx] += calls;
        s.per_step[idx] += calls * cost;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.inner.lock().expect("ledger poisoned").clone()
    }

    pub fn total_base_matvecs(&self) -> u64 {
        self.inner
            .lock()
            .expect("ledger poisoned")
            .total_base_matvecs
    }

    pub fn oracle_calls(&self) -> u64 {
        self.inner.lock().expect("ledger poisoned").oracle_calls
    }

    pub fn calls_at(&self, step: usize) -> u64 {
        let s = self.inner.lock().expect("ledger poisoned");
        s.calls_per_step
            .get(step.saturating_sub(1))
            .copied()
            .unwrap_or(0)
    }
}

/// Oracle wrapper that charges every application to a ledger.
pub struct Counted<'a, O: ?Sized> {
    inner: &'a O,
    ledger: &'a MatVecLedger,
    step: usize,
}

pub fn counted<'a, O: MatVecOracle + ?Sized>(
    oracle: &'a O,
    ledger: &'a MatVecLedger,
    step: usize,
) -> Counted<'a, O> {
    Counted {
        inner: oracle,
        ledger,
        step,
    }
}

impl<O: MatVecOracle + ?Sized> MatVecOracle for Counted<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matvec_cost(&self) -> u64 {
        self.inner.matvec_cost()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.ledger.record(self.step, 1, self.inner.matvec_cost());
        self.inner.apply_into(x, y)
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.ledger
            .record(self.step, x.ncols() as u64, self.inner.matvec_cost());
        self.inner.apply_block(x)
    }
}

/// Assembles the dense matrix of an oracle by probing the standard basis.
/// Test and ground-truth helper; costs `n` applications.
pub fn materialize(oracle: &dyn MatVecOracle) -> DMatrix<f64> {
    oracle.apply_block(&DMatrix::identity(oracle.dim(), oracle.dim()))
}
