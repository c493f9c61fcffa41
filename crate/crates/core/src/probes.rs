//! Rademacher probe batches and the quadratic-form kernel shared by the
//! estimators.
//!
//! Probe `i` of the batch keyed by `(seed, step, tag)` is read from ChaCha
//! stream `i` of that key, so a probe's entries depend only on its key and
//! index, never on evaluation order.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::rng::{key, tags};

/// `count` probe vectors with entries in `{-1, +1}`, stored as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeBatch {
    pub seed: u64,
    pub step: u64,
    pub tag: u64,
    pub vectors: DMatrix<f64>,
}

impl ProbeBatch {
    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }
}

/// The standard probe batch for `(seed, step)`.
pub fn rademacher_batch(seed: u64, step: u64, count: usize, dim: usize) -> ProbeBatch {
    rademacher_batch_tagged(seed, step, tags::PROBES, count, dim)
}

/// Probe batch on an explicit stream tag, for estimators that need several
/// independent batches within one step.
pub fn rademacher_batch_tagged(
    seed: u64,
    step: u64,
    tag: u64,
    count: usize,
    dim: usize,
) -> ProbeBatch {
    let k = key(seed, step, tag);
    let mut vectors = DMatrix::zeros(dim, count);
    for (i, mut col) in vectors.column_iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::from_seed(k);
        rng.set_stream(i as u64);
        let out = col.as_mut_slice();
        for chunk in out.chunks_mut(64) {
            let bits = rng.next_u64();
            for (b, v) in chunk.iter_mut().enumerate() {
                *v = if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 };
            }
        }
    }
    ProbeBatch {
        seed,
        step,
        tag,
        vectors,
    }
}

/// Oracle responses `A g_i` together with the forms `g_i^T A g_i`.
#[derive(Clone, Debug)]
pub struct QuadraticSamples {
    pub responses: DMatrix<f64>,
    pub forms: Vec<f64>,
}

/// Applies the oracle once per probe and caches the responses for reuse.
pub fn quadratic_samples(
    oracle: &dyn MatVecOracle,
    batch: &ProbeBatch,
) -> Result<QuadraticSamples> {
    if oracle.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            found: batch.dim(),
        });
    }
    let responses = oracle.apply_block(&batch.vectors);
    let forms = column_dots(&batch.vectors, &responses);
    Ok(QuadraticSamples { responses, forms })
}

/// Column-wise inner products `a_i^T b_i`, accumulated in coordinate order.
pub(crate) fn column_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum())
        .collect()
}

/// Sample mean in probe order. Every estimator averages through this so that
/// algebraically identical estimators are also bit-identical.
pub(crate) fn probe_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_oracle, DiagonalOracle, IdentityOracle};

    #[test]
    fn deterministic_and_signed() {
        let a = rademacher_batch(7, 1, 2, 4);
        let b = rademacher_batch(7, 1, 2, 4);
        assert_eq!(a, b);
        assert!(a.vectors.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn steps_and_tags_use_distinct_streams() {
        let a = rademacher_batch(7, 1, 2, 64);
        let b = rademacher_batch(7, 2, 2, 64);
        let c = rademacher_batch_tagged(7, 1, tags::HUTCHPP_SKETCH, 2, 64);
        assert_ne!(a.vectors, b.vectors);
        assert_ne!(a.vectors, c.vectors);
        // the two probes of one batch differ as well
        assert_ne!(a.vectors.column(0), a.vectors.column(1));
    }

    #[test]
    fn prefix_stability() {
        // probe i does not depend on how many probes were requested
        let short = rademacher_batch(3, 5, 2, 100);
        let long = rademacher_batch(3, 5, 6, 100);
        assert_eq!(short.vectors.columns(0, 2), long.vectors.columns(0, 2));
    }

    #[test]
    fn sign_balance() {
        let batch = rademacher_batch(11, 3, 1000, 1000);
        let mean = batch.vectors.iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn identity_and_diagonal_forms_are_exact() {
        let batch = rademacher_batch(1, 1, 5, 9);
        let s = quadratic_samples(&IdentityOracle { n: 9 }, &batch).unwrap();
        assert!(s.forms.iter().all(|&f| f == 9.0));
        let diag: Vec<f64> = (0..9).map(|i| 0.5 * i as f64 - 1.0).collect();
        let total: f64 = diag.iter().sum();
        let s = quadratic_samples(&DiagonalOracle { diag }, &batch).unwrap();
        for f in s.forms {
            assert!((f - total).abs() < 1e-12);
        }
    }

    #[test]
    fn forms_match_dense_quadratic_forms() {
        let a = DMatrix::from_fn(8, 8, |i, j| ((i * 8 + j) as f64 * 0.731).sin());
        let batch = rademacher_batch(4, 2, 6, 8);
        let s = quadratic_samples(&dense_oracle(a.clone()).unwrap(), &batch).unwrap();
        for (i, g) in batch.vectors.column_iter().enumerate() {
            let expected = (g.transpose() * &a * g)[(0, 0)];
            assert!((s.forms[i] - expected).abs() < 1e-12);
        }
        assert_eq!(s.responses.ncols(), 6);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let batch = rademacher_batch(1, 1, 2, 3);
        assert!(matches!(
            quadratic_samples(&IdentityOracle { n: 4 }, &batch),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 3
            })
        ));
    }
}
