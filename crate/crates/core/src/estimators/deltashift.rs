//! Damped variance reduction for sequences of matrices.
//!
//! Each step draws fresh probes `g_i`, collects `z_i = A_{j-1} g_i` and
//! `w_i = A_j g_i`, and updates
//!
//! ```text
//! t_j = (1 - gamma) t_{j-1} + (1/l) sum_i g_i^T (w_i - (1 - gamma) z_i)
//! ```
//!
//! `gamma = 0` is the undamped running sum (NoRestart), `gamma = 1` discards
//! history. The parameter-free variant picks `gamma` per step by minimizing a
//! tracked variance proxy computed from the same `2l` products. By default
//! the proxy and `gamma` use a held-out third of the probe pairs and the
//! update uses the rest (see [`GammaProbes`]).

use nalgebra::DMatrix;

use super::{EstimatorState, GammaMode, GammaProbes, StepOutcome};
use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::probes::{column_dots, probe_mean, quadratic_samples, rademacher_batch};

struct Paired {
    probes: DMatrix<f64>,
    prev: DMatrix<f64>,
    cur: DMatrix<f64>,
}

fn paired_products(
    prev: &dyn MatVecOracle,
    cur: &dyn MatVecOracle,
    seed: u64,
    step: usize,
    ell: usize,
) -> Result<Paired> {
    if ell == 0 {
        return Err(Error::invalid("delta step needs at least one probe"));
    }
    if prev.dim() != cur.dim() {
        return Err(Error::DimensionMismatch {
            expected: prev.dim(),
            found: cur.dim(),
        });
    }
    let batch = rademacher_batch(seed, step as u64, ell, cur.dim());
    let z = prev.apply_block(&batch.vectors);
    let w = cur.apply_block(&batch.vectors);
    Ok(Paired {
        probes: batch.vectors,
        prev: z,
        cur: w,
    })
}

fn check_advance(state: &EstimatorState) -> Result<usize> {
    if state.step == 0 {
        return Err(Error::invalid("estimator state is not initialized"));
    }
    Ok(state.step + 1)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "damping factor {gamma} outside [0, 1]"
        )))
    }
}

/// Residuals `w_i - keep * z_i`.
fn damped_residuals(p: &Paired, keep: f64) -> DMatrix<f64> {
    &p.cur - &p.prev * keep
}

/// Column ranges feeding the trace update and the statistics.
struct Roles {
    trace: std::ops::Range<usize>,
    stats: std::ops::Range<usize>,
}

impl Roles {
    fn all(ell: usize) -> Self {
        Roles {
            trace: 0..ell,
            stats: 0..ell,
        }
    }

    fn split(ell: usize, probes: GammaProbes) -> Result<Self> {
        match probes.held_out(ell) {
            Some(0) => Ok(Roles::all(ell)),
            Some(h) => Ok(Roles {
                trace: h..ell,
                stats: 0..h,
            }),
            None => Err(Error::Budget(format!(
                "held-out damping statistics need at least 2 probes, got {ell}"
            ))),
        }
    }

    fn trace_count(&self) -> usize {
        self.trace.len()
    }
}

fn mean_over(values: &[f64], cols: &std::ops::Range<usize>) -> f64 {
    probe_mean(&values[cols.clone()])
}

fn apply_update(state: &mut EstimatorState, p: &Paired, gamma: f64, roles: &Roles) -> f64 {
    let keep = 1.0 - gamma;
    let r = damped_residuals(p, keep);
    let delta_hat = mean_over(&column_dots(&p.probes, &r), &roles.trace);
    let frob: Vec<f64> = r.column_iter().map(|c| c.norm_squared()).collect();
    let l = roles.trace_count() as f64;
    state.t = keep * state.t + delta_hat;
    state.v = keep * keep * state.v + (2.0 / l) * mean_over(&frob, &roles.stats);
    state.step += 1;
    state.ell = p.probes.ncols();
    state.t
}

/// Initializes any DeltaShift-style estimator from `ell0` probes of `A_1`:
/// `t_1 = h(A_1)` and `v_1 = (2/l) N` with `N` the mean of `||A_1 g_i||^2`.
/// Under `Auto(HeldOut)` the held-out probes give `N` and the others give
/// `t_1`, with `l` their count; otherwise all `ell0` probes give both.
pub fn deltashift_init(
    oracle_first: &dyn MatVecOracle,
    ell0: usize,
    seed: u64,
    gamma_mode: GammaMode,
) -> Result<EstimatorState> {
    if ell0 == 0 {
        return Err(Error::invalid("initial probe count must be positive"));
    }
    let roles = match gamma_mode {
        GammaMode::Fixed(g) => {
            check_gamma(g)?;
            Roles::all(ell0)
        }
        GammaMode::Auto(probes) => Roles::split(ell0, probes)?,
    };
    let batch = rademacher_batch(seed, 1, ell0, oracle_first.dim());
    let s = quadratic_samples(oracle_first, &batch)?;
    let norms: Vec<f64> = s
        .responses
        .column_iter()
        .map(|c| c.norm_squared())
        .collect();
    let n_est = mean_over(&norms, &roles.stats);
    Ok(EstimatorState {
        t: mean_over(&s.forms, &roles.trace),
        v: 2.0 / roles.trace_count() as f64 * n_est,
        step: 1,
        seed,
        ell: ell0,
        ell0,
        gamma_mode,
    })
}

/// Undamped update `t_j = t_{j-1} + h_l(A_j - A_{j-1})`; `2l` applications.
pub fn norestart_step(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    ell: usize,
) -> Result<StepOutcome> {
    deltashift_fixed_step(state, oracle_prev, oracle_cur, ell, 0.0)
}

/// Damped update with a fixed `gamma` in `[0, 1]`; `2l` applications.
pub fn deltashift_fixed_step(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    ell: usize,
    gamma: f64,
) -> Result<StepOutcome> {
    check_gamma(gamma)?;
    let j = check_advance(state)?;
    let p = paired_products(oracle_prev, oracle_cur, state.seed, j, ell)?;
    let estimate = apply_update(state, &p, gamma, &Roles::all(ell));
    Ok(StepOutcome {
        estimate,
        gamma: Some(gamma),
    })
}

/// Minimizer over `gamma in [0, 1]` of the tracked variance
/// `(1-g)^2 v + (2/l)(M + (1-g)^2 N - 2(1-g) C)`:
/// `clamp(1 - 2C / (l v + 2N), 0, 1)`, or 1 when the denominator vanishes.
pub fn optimal_gamma(c: f64, n: f64, v_prev: f64, ell: usize) -> f64 {
    let denom = ell as f64 * v_prev + 2.0 * n;
    if denom <= 0.0 || !denom.is_finite() {
        return 1.0;
    }
    let g = 1.0 - 2.0 * c / denom;
    if g.is_nan() {
        1.0
    } else {
        g.clamp(0.0, 1.0)
    }
}

/// Parameter-free update: `gamma` from [`optimal_gamma`] using `N`, `C`
/// estimated on the step's own products; `2l` applications. The probe roles
/// follow the state's [`GammaMode::Auto`] setting (held out for a state
/// initialized with a fixed damping factor).
pub fn deltashift_auto_step(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    ell: usize,
) -> Result<StepOutcome> {
    let j = check_advance(state)?;
    let probes = match state.gamma_mode {
        GammaMode::Auto(p) => p,
        GammaMode::Fixed(_) => GammaProbes::default(),
    };
    let roles = Roles::split(ell, probes)?;
    let p = paired_products(oracle_prev, oracle_cur, state.seed, j, ell)?;
    let norms: Vec<f64> = p.prev.column_iter().map(|c| c.norm_squared()).collect();
    let n_est = mean_over(&norms, &roles.stats);
    let c_est = mean_over(&column_dots(&p.cur, &p.prev), &roles.stats);
    let gamma = optimal_gamma(c_est, n_est, state.v, roles.trace_count());
    let estimate = apply_update(state, &p, gamma, &roles);
    Ok(StepOutcome {
        estimate,
        gamma: Some(gamma),
    })
}

/// Dispatches on the state's gamma mode.
pub fn deltashift_step(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    ell: usize,
) -> Result<StepOutcome> {
    match state.gamma_mode {
        GammaMode::Fixed(g) => deltashift_fixed_step(state, oracle_prev, oracle_cur, ell, g),
        GammaMode::Auto(_) => deltashift_auto_step(state, oracle_prev, oracle_cur, ell),
    }
}
