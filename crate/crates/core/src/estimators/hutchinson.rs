use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::probes::{probe_mean, quadratic_samples, ProbeBatch};

/// Hutchinson's estimate `(1/l) sum_i g_i^T A g_i` over the probes of `batch`.
///
/// `ell` must equal the batch size; it is repeated in the signature so that
/// call sites state their probe budget explicitly.
pub fn hutchinson(oracle: &dyn MatVecOracle, ell: usize, batch: &ProbeBatch) -> Result<f64> {
    if ell == 0 {
        return Err(Error::invalid("Hutchinson needs at least one probe"));
    }
    if batch.len() != ell {
        return Err(Error::invalid(format!(
            "probe count {ell} does not match batch size {}",
            batch.len()
        )));
    }
    let samples = quadratic_samples(oracle, batch)?;
    Ok(probe_mean(&samples.forms))
}

/// Exact variance of the Rademacher estimator with `ell` probes:
/// `(2/l) (||A||_F^2 - sum_i A_ii^2)`, symmetrized so it also holds for
/// non-symmetric input (only the symmetric part of `A` enters `g^T A g`).
pub fn hutchinson_exact_variance(matrix: &DMatrix<f64>, ell: usize) -> f64 {
    let sym = (matrix + matrix.transpose()) * 0.5;
    let off_diag: f64 = sym
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % sym.nrows() != idx / sym.nrows())
        .map(|(_, v)| v * v)
        .sum();
    2.0 * off_diag / ell as f64
}
