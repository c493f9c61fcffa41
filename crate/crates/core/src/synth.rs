//! Synthetic dynamic matrix sequences and dense reference traces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfunc::chebyshev_scalar;
use crate::rng::{stream_rng, tags};

pub const RANK1_SCALE: f64 = 5e-5;
pub const DEFAULT_PSD_RANK: usize = 25;
/// Default `||Delta_j||_F / ||A_1||_F` for PSD perturbations.
pub const DEFAULT_PSD_FRACTION: f64 = 0.05;

/// Random symmetric matrix together with the eigenvalues it was built from.
#[derive(Clone, Debug)]
pub struct SpectralMatrix {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

/// `Q diag(lambda) Q^T` with `lambda` uniform on `[-1, 1]` and `Q` Haar
/// distributed (QR of a Gaussian matrix with the sign of `R` fixed).
pub fn random_symmetric_spectral(n: usize, seed: u64) -> SpectralMatrix {
    let mut rng = stream_rng(seed, 0, tags::SYMMETRIC);
    let eigenvalues = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (c, mut col) in q.column_iter_mut().enumerate() {
        if r[(c, c)] < 0.0 {
            col.neg_mut();
        }
    }
    let scaled = DMatrix::from_fn(n, n, |i, k| q[(i, k)] * eigenvalues[k]);
    let mut matrix = scaled * q.transpose();
    symmetrize(&mut matrix);
    SpectralMatrix {
        matrix,
        eigenvalues,
    }
}

pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    random_symmetric_spectral(n, seed).matrix
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for k in (i + 1)..n {
            let avg = 0.5 * (m[(i, k)] + m[(k, i)]);
            m[(i, k)] = avg;
            m[(k, i)] = avg;
        }
    }
}

/// `scale * r * g g^T` with `r = +-1` and `g` standard Gaussian.
pub fn rank1_perturb(seed: u64, step: u64, n: usize, scale: f64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, step, tags::RANK1);
    let r = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose() * (scale * r)
}

/// Rank-`k` Gram matrix `G G^T` rescaled to Frobenius norm `target_frob`.
pub fn psd_rank_k_perturb(
    seed: u64,
    step: u64,
    n: usize,
    k: usize,
    target_frob: f64,
) -> Result<DMatrix<f64>> {
    if k > n {
        return Err(Error::invalid(format!("rank {k} exceeds dimension {n}")));
    }
    if !(target_frob.is_finite() && target_frob >= 0.0) {
        return Err(Error::invalid(format!("bad target norm {target_frob}")));
    }
    let mut rng = stream_rng(seed, step, tags::PSD);
    let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut m = &g * g.transpose();
    symmetrize(&mut m);
    let f = m.norm();
    if f > 0.0 {
        m *= target_frob / f;
    }
    Ok(m)
}

pub fn exact_trace(matrix: &DMatrix<f64>) -> f64 {
    matrix.trace()
}

fn eigenvalues(matrix: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(matrix.clone()).eigenvalues
}

/// `tr(exp(B))` of a symmetric matrix via its eigenvalues.
pub fn exact_trace_expm(matrix: &DMatrix<f64>) -> f64 {
    eigenvalues(matrix).iter().map(|l| l.exp()).sum()
}

/// `tr(T_q(H / scale))` for `q = 0..=q_max` of a symmetric matrix.
pub fn exact_chebyshev_traces(matrix: &DMatrix<f64>, scale: f64, q_max: usize) -> Vec<f64> {
    let lambdas = eigenvalues(matrix);
    (0..=q_max)
        .map(|q| lambdas.iter().map(|l| chebyshev_scalar(q, l / scale)).sum())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Rank-one steps `5e-5 r g g^T`.
    LowPerturb,
    /// Rank-25 PSD steps of norm `frob_fraction * ||A_1||_F`.
    HighPerturb,
    /// `A_j = A_1`.
    Stationary,
    /// Rank-`k` PSD steps of norm `frob_fraction * ||A_1||_F`.
    LowrankPsd(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixSequenceSpec {
    pub n: usize,
    pub m: usize,
    pub kind: PerturbationKind,
    pub seed: u64,
    pub frob_fraction: f64,
}

impl MatrixSequenceSpec {
    pub fn new(n: usize, m: usize, kind: PerturbationKind, seed: u64) -> Self {
        Self {
            n,
            m,
            kind,
            seed,
            frob_fraction: DEFAULT_PSD_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("sequence dimension must be at least 2"));
        }
        if self.m < 1 {
            return Err(Error::invalid("sequence needs at least one step"));
        }
        if let PerturbationKind::LowrankPsd(k) = self.kind {
            if k == 0 || k > self.n {
                return Err(Error::invalid(format!("rank {k} outside 1..={}", self.n)));
            }
        }
        Ok(())
    }
}

/// Generates `A_1, A_2, ...` incrementally with `A_j = A_{j-1} + Delta_j`.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    spec: MatrixSequenceSpec,
    current: DMatrix<f64>,
    first_frob: f64,
    step: usize,
}

impl SyntheticSequence {
    pub fn new(spec: MatrixSequenceSpec) -> Result<Self> {
        spec.validate()?;
        let current = random_symmetric(spec.n, spec.seed);
        let first_frob = current.norm();
        Ok(Self {
            spec,
            current,
            first_frob,
            step: 0,
        })
    }

    pub fn spec(&self) -> &MatrixSequenceSpec {
        &self.spec
    }

    /// `Delta_j` for `j >= 2`.
    pub fn perturbation(&self, j: usize) -> Result<DMatrix<f64>> {
        let (n, seed) = (self.spec.n, self.spec.seed);
        let target = self.spec.frob_fraction * self.first_frob;
        match self.spec.kind {
            PerturbationKind::LowPerturb => Ok(rank1_perturb(seed, j as u64, n, RANK1_SCALE)),
            PerturbationKind::HighPerturb => {
                psd_rank_k_perturb(seed, j as u64, n, DEFAULT_PSD_RANK.min(n), target)
            }
            PerturbationKind::LowrankPsd(k) => psd_rank_k_perturb(seed, j as u64, n, k, target),
            PerturbationKind::Stationary => Ok(DMatrix::zeros(n, n)),
        }
    }

    /// Advances to the next matrix; `None` after `m` steps.
    pub fn advance(&mut self) -> Result<Option<&DMatrix<f64>>> {
        if self.step >= self.spec.m {
            return Ok(None);
        }
        self.step += 1;
        if self.step > 1 {
            let delta = self.perturbation(self.step)?;
            self.current += delta;
        }
        Ok(Some(&self.current))
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.current
    }
}
