//! Hutch++: deflate an approximate dominant range, then run Hutchinson on
//! what remains.
//!
//! With sketch `S`, basis `Q = orth(A S)` and residual probes `G`:
//!
//! ```text
//! h++(A) = tr(Q^T A Q) + (1/r) sum_i g_i'^T A g_i',   g_i' = (I - QQ^T) g_i
//! ```
//!
//! which is unbiased for any `Q` independent of `G`. The same residual
//! products also give `K = (1/r) sum_i ||(I - QQ^T) A g_i'||^2`, an unbiased
//! estimate of the squared Frobenius norm of the deflated operator. A prefix
//! of `G` can be held out so that `K` comes from probes the trace estimate
//! never sees.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::probes::{column_dots, probe_mean, rademacher_batch_tagged};
use crate::rng::tags;

/// Singular values below this fraction of the largest are treated as zero
/// when orthonormalizing the sketch responses.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Budget for one Hutch++ call, in applications of the operator it is run on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HutchPPConfig {
    pub ell: usize,
    /// Fractions of `ell` for sketch, projection and residual probes.
    pub split: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HutchPPCounts {
    pub sketch: usize,
    pub projection: usize,
    pub residual: usize,
}

impl HutchPPCounts {
    pub fn total(&self) -> usize {
        self.sketch + self.projection + self.residual
    }
}

impl HutchPPConfig {
    /// Even thirds.
    pub fn new(ell: usize) -> Self {
        Self {
            ell,
            split: [1.0 / 3.0; 3],
        }
    }

    /// Resolves the split into probe counts. The projection cannot use more
    /// vectors than the sketch produced, so any excess moves to the residual.
    pub fn counts(&self) -> Result<HutchPPCounts> {
        if self.ell < 3 {
            return Err(Error::Budget(format!(
                "Hutch++ needs at least 3 matvecs, got {}",
                self.ell
            )));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid(format!(
                "Hutch++ split {:?} must be nonnegative and sum to 1",
                self.split
            )));
        }
        let frac = |f: f64| (self.ell as f64 * f + 1e-9).floor() as usize;
        let sketch = frac(self.split[0]);
        let projection = frac(self.split[1]).min(sketch);
        let residual = self.ell - sketch - projection;
        if sketch == 0 || projection == 0 || residual == 0 {
            return Err(Error::Budget(format!(
                "Hutch++ split {:?} of {} leaves an empty group",
                self.split, self.ell
            )));
        }
        Ok(HutchPPCounts {
            sketch,
            projection,
            residual,
        })
    }
}

/// Everything one Hutch++ call produces.
#[derive(Clone, Debug)]
pub struct HutchPPOutput {
    pub estimate: f64,
    /// `tr(Q^T A Q)`.
    pub low_rank_part: f64,
    /// Hutchinson estimate of the deflated trace.
    pub residual_part: f64,
    /// Estimate of `||(I - QQ^T) A (I - QQ^T)||_F^2`.
    pub residual_frob_sq: f64,
    pub rank: usize,
    /// Probes behind `residual_part`.
    pub residual_probes: usize,
    /// Operator applications consumed (sketch + projection + residual).
    pub applies: usize,
}

/// Orthonormal basis of the dominant left singular subspace of `y`, at most
/// `max_cols` wide, with numerically zero directions dropped.
///
/// Rank is read off a column-pivoted QR; when it exceeds `max_cols` the
/// leading directions come from the eigenvectors of the small Gram matrix
/// `(Q^T y)(Q^T y)^T`. (nalgebra's bidiagonal SVD can return an inaccurate
/// factorization for rank-deficient tall inputs.)
pub(crate) fn dominant_basis(y: &DMatrix<f64>, max_cols: usize) -> DMatrix<f64> {
    let n = y.nrows();
    if y.ncols() == 0 || max_cols == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = y.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols()))
        .map(|i| r[(i, i)].abs())
        .collect();
    let top = diag.iter().copied().fold(0.0, f64::max);
    let rank = diag
        .iter()
        .take_while(|&&d| top > 0.0 && d > RANK_TOLERANCE * top)
        .count();
    if rank == 0 {
        return DMatrix::zeros(n, 0);
    }
    let q = qr.q().columns(0, rank).into_owned();
    if rank <= max_cols {
        return q;
    }
    let b = q.transpose() * y;
    let eig = SymmetricEigen::new(&b * b.transpose());
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&i, &k| {
        eig.eigenvalues[k]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&k))
    });
    let v = DMatrix::from_fn(rank, max_cols, |row, c| eig.eigenvectors[(row, order[c])]);
    q * v
}

/// Hutch++ given precomputed sketch responses `A S`. The first `held_out`
/// residual probes feed only the Frobenius estimate and the rest only the
/// trace; with `held_out = 0` every probe feeds both.
pub(crate) fn hutchpp_from_sketch(
    oracle: &dyn MatVecOracle,
    sketch_responses: &DMatrix<f64>,
    sketch_applies: usize,
    projection: usize,
    residual_probes: &DMatrix<f64>,
    held_out: usize,
) -> HutchPPOutput {
    debug_assert!(held_out == 0 || held_out < residual_probes.ncols());
    let q = dominant_basis(sketch_responses, projection);
    let rank = q.ncols();

    let low_rank_part = if rank > 0 {
        let aq = oracle.apply_block(&q);
        column_dots(&q, &aq).iter().sum()
    } else {
        0.0
    };

    let deflated = if rank > 0 {
        residual_probes - &q * (q.transpose() * residual_probes)
    } else {
        residual_probes.clone()
    };
    let y = oracle.apply_block(&deflated);
    let total = residual_probes.ncols();
    let (norm_cols, trace_cols) = if held_out == 0 {
        (0..total, 0..total)
    } else {
        (0..held_out, held_out..total)
    };
    let forms = column_dots(&deflated, &y);
    let residual_part = probe_mean(&forms[trace_cols.clone()]);
    let r = if rank > 0 {
        &y - &q * (q.transpose() * &y)
    } else {
        y
    };
    let norms: Vec<f64> = norm_cols.map(|c| r.column(c).norm_squared()).collect();
    let residual_frob_sq = probe_mean(&norms);

    HutchPPOutput {
        estimate: low_rank_part + residual_part,
        low_rank_part,
        residual_part,
        residual_frob_sq,
        rank,
        residual_probes: trace_cols.len(),
        applies: sketch_applies + rank + total,
    }
}

/// Hutch++ with probes drawn from the given stream tags.
pub fn hutchpp_tagged(
    oracle: &dyn MatVecOracle,
    config: &HutchPPConfig,
    seed: u64,
    step: u64,
    sketch_tag: u64,
    residual_tag: u64,
) -> Result<HutchPPOutput> {
    let counts = config.counts()?;
    let n = oracle.dim();
    let sketch = rademacher_batch_tagged(seed, step, sketch_tag, counts.sketch, n);
    let residual = rademacher_batch_tagged(seed, step, residual_tag, counts.residual, n);
    let ys = oracle.apply_block(&sketch.vectors);
    Ok(hutchpp_from_sketch(
        oracle,
        &ys,
        counts.sketch,
        counts.projection,
        &residual.vectors,
        0,
    ))
}

/// Full Hutch++ output on the default stream tags.
pub fn hutchpp_detailed(
    oracle: &dyn MatVecOracle,
    config: &HutchPPConfig,
    seed: u64,
    step: u64,
) -> Result<HutchPPOutput> {
    hutchpp_tagged(
        oracle,
        config,
        seed,
        step,
        tags::HUTCHPP_SKETCH,
        tags::HUTCHPP_RESIDUAL,
    )
}

/// Unbiased Hutch++ trace estimate using at most `config.ell` applications.
pub fn hutchpp(
    oracle: &dyn MatVecOracle,
    config: &HutchPPConfig,
    seed: u64,
    step: u64,
) -> Result<f64> {
    Ok(hutchpp_detailed(oracle, config, seed, step)?.estimate)
}
