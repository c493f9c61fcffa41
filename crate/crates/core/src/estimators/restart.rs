use super::deltashift::norestart_step;
use super::{hutchinson, EstimatorState, GammaMode};
use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::probes::rademacher_batch;

/// Whether step `j` (1-based) starts a new block under restart period `q`.
pub fn is_restart_step(j: usize, q: usize) -> bool {
    (j - 1).is_multiple_of(q)
}

/// Fresh Hutchinson estimate with `ell0` probes, as used at every restart.
pub(crate) fn fresh_state(
    oracle: &dyn MatVecOracle,
    step: usize,
    ell0: usize,
    seed: u64,
) -> Result<EstimatorState> {
    let batch = rademacher_batch(seed, step as u64, ell0, oracle.dim());
    let t = hutchinson(oracle, ell0, &batch)?;
    Ok(EstimatorState {
        t,
        v: 0.0,
        step,
        seed,
        ell: ell0,
        ell0,
        gamma_mode: GammaMode::Fixed(0.0),
    })
}

/// Running estimate with periodic restarts: steps `j = 1 (mod q)` take a
/// fresh `ell0`-probe Hutchinson estimate, the others add `h_l(A_j - A_{j-1})`.
pub fn restart_run(
    oracles: &[&dyn MatVecOracle],
    ell0: usize,
    ell: usize,
    q: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::invalid("restart period must be at least 1"));
    }
    let mut out = Vec::with_capacity(oracles.len());
    let mut state: Option<EstimatorState> = None;
    for (idx, oracle) in oracles.iter().enumerate() {
        let j = idx + 1;
        let t = match state.as_mut() {
            Some(s) if !is_restart_step(j, q) => {
                norestart_step(s, oracles[idx - 1], *oracle, ell)?.estimate
            }
            _ => {
                let s = fresh_state(*oracle, j, ell0, seed)?;
                let t = s.t;
                state = Some(s);
                t
            }
        };
        out.push(t);
    }
    Ok(out)
}

/// Applications consumed by [`restart_run`] over `m` steps.
pub fn restart_applies(m: usize, ell0: usize, ell: usize, q: usize) -> u64 {
    let restarts = m.div_ceil(q);
    (restarts * ell0 + 2 * ell * (m - restarts)) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::deltashift::deltashift_init;
    use crate::oracle::{counted, dense_oracle, DenseOracle, MatVecLedger};
    use crate::synth::random_symmetric;

    fn sequence(m: usize, n: usize) -> Vec<DenseOracle> {
        let base = random_symmetric(n, 1);
        (0..m)
            .map(|j| dense_oracle(&base + random_symmetric(n, 100 + j as u64) * 0.05).unwrap())
            .collect()
    }

    #[test]
    fn period_one_is_independent_hutchinson() {
        let seq = sequence(6, 8);
        let refs: Vec<&dyn MatVecOracle> = seq.iter().map(|o| o as &dyn MatVecOracle).collect();
        let t = restart_run(&refs, 5, 2, 1, 9).unwrap();
        for (j, o) in seq.iter().enumerate() {
            let h = hutchinson(o, 5, &rademacher_batch(9, j as u64 + 1, 5, 8)).unwrap();
            assert_eq!(t[j], h);
        }
    }

    #[test]
    fn long_period_is_norestart() {
        let seq = sequence(7, 8);
        let refs: Vec<&dyn MatVecOracle> = seq.iter().map(|o| o as &dyn MatVecOracle).collect();
        let t = restart_run(&refs, 6, 3, 7, 2).unwrap();
        let t_far = restart_run(&refs, 6, 3, 100, 2).unwrap();
        let mut s = deltashift_init(&seq[0], 6, 2, GammaMode::Fixed(0.0)).unwrap();
        assert_eq!(t[0], s.t);
        for j in 1..7 {
            let x = norestart_step(&mut s, &seq[j - 1], &seq[j], 3)
                .unwrap()
                .estimate;
            assert_eq!(t[j], x);
            assert_eq!(t_far[j], x);
        }
    }

    #[test]
    fn ledger_matches_block_formula() {
        let (m, q, ell0, ell) = (100, 20, 30, 4);
        let seq = sequence(m, 6);
        let ledger = MatVecLedger::new();
        let wrapped: Vec<_> = seq
            .iter()
            .enumerate()
            .map(|(j, o)| counted(o, &ledger, j + 1))
            .collect();
        let refs: Vec<&dyn MatVecOracle> = wrapped.iter().map(|o| o as &dyn MatVecOracle).collect();
        restart_run(&refs, ell0, ell, q, 1).unwrap();
        assert_eq!(
            restart_applies(m, ell0, ell, q),
            (5 * ell0 + 95 * 2 * ell) as u64
        );
        assert_eq!(ledger.oracle_calls(), restart_applies(m, ell0, ell, q));
    }

    #[test]
    fn zero_period_rejected() {
        let seq = sequence(2, 4);
        let refs: Vec<&dyn MatVecOracle> = seq.iter().map(|o| o as &dyn MatVecOracle).collect();
        assert!(restart_run(&refs, 2, 2, 0, 1).is_err());
    }
}
