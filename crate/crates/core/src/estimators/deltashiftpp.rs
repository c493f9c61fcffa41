//! DeltaShift++: the damped recurrence written as
//!
//! ```text
//! t_j = gamma h++(A_j) + (1 - gamma) (t_{j-1} + h++(A_j - A_{j-1}))
//! ```
//!
//! so both Hutch++ calls run on matrices that do not depend on `gamma`.
//! `gamma` minimizes `gamma^2 a + (1 - gamma)^2 b` with `a = 8 K_A / l_A`
//! and `b = v_{j-1} + 8 K_D / l_D`, where `K_A`, `K_D` are the deflated
//! Frobenius norms measured inside the two calls and `l_A`, `l_D` their
//! budgets. With equal budgets this is
//! `(8 K_D + l v) / (8 K_A + l v + 8 K_D)`.
//!
//! By default `K_A` and `K_D` are measured on residual probes held out from
//! the trace estimates. `gamma` and `v` then depend only on sketches and
//! held-out probes, and the recurrence stays exactly unbiased. Measuring
//! them on the trace probes instead ([`GammaProbes::Shared`]) couples
//! `gamma` to the estimates it weights and biases `t_j` low when the
//! deflated operators are close to PSD.

use super::hutchpp::{hutchpp_from_sketch, HutchPPConfig, HutchPPOutput};
use super::{EstimatorState, GammaMode, GammaProbes, StepOutcome};
use crate::error::{Error, Result};
use crate::oracle::{DifferenceOracle, MatVecOracle};
use crate::probes::rademacher_batch_tagged;
use crate::rng::tags;

/// Unit the per-step budget `l` is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BudgetUnit {
    /// Every application of `A_j` or `A_{j-1}` counts once; a product with
    /// the implicit difference costs two.
    #[default]
    Matvecs,
    /// A product with the implicit difference counts once, like a product
    /// with `A_j`.
    OracleCalls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PlusPlusOptions {
    pub unit: BudgetUnit,
    /// Share the sketch between the two calls so `A_j S` is computed once.
    pub reuse_sketch: bool,
}

/// Sketch, projection, residual and held-out counts of one Hutch++ call
/// with budget `ell`.
fn call_counts(ell: usize, probes: GammaProbes) -> Option<([usize; 3], usize)> {
    let c = HutchPPConfig::new(ell).counts().ok()?;
    let held = probes.held_out(c.residual)?;
    Some(([c.sketch, c.projection, c.residual], held))
}

/// Smallest initial budget [`deltashiftpp_init`] accepts.
pub fn min_initial_budget(probes: GammaProbes) -> usize {
    (3..)
        .find(|&l| call_counts(l, probes).is_some())
        .expect("finite")
}

/// Probe counts for one DeltaShift++ step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlusPlusPlan {
    /// Sketch, projection, residual for the `A_j` call.
    pub a_call: [usize; 3],
    /// Sketch, projection, residual for the difference call, counted in
    /// difference applications.
    pub delta_call: [usize; 3],
    /// Residual probes of each call reserved for the norm estimates.
    pub a_held: usize,
    pub delta_held: usize,
    pub reuse_sketch: bool,
}

impl PlusPlusPlan {
    pub fn new(ell: usize, opts: PlusPlusOptions, probes: GammaProbes) -> Result<Self> {
        let too_small = || {
            Error::Budget(format!(
                "DeltaShift++ step budget {ell} too small for two Hutch++ calls"
            ))
        };
        if opts.reuse_sketch {
            // base cost: A-call k + k + r_a, difference call k (A_{j-1} S only)
            // + 2k + 2r_d; one unit per group, leftovers to the A residual
            let base = match opts.unit {
                BudgetUnit::Matvecs => ell,
                BudgetUnit::OracleCalls => ell / 2 + 2 * (ell / 2),
            };
            let u = base / 8;
            let ra = base.saturating_sub(7 * u);
            let (a_held, delta_held) = match (u, probes.held_out(ra), probes.held_out(u)) {
                (1.., Some(a), Some(d)) => (a, d),
                _ => return Err(too_small()),
            };
            return Ok(Self {
                a_call: [u, u, ra],
                delta_call: [u, u, u],
                a_held,
                delta_held,
                reuse_sketch: true,
            });
        }
        let a = ell / 2;
        let d = match opts.unit {
            BudgetUnit::Matvecs => (ell - a) / 2,
            BudgetUnit::OracleCalls => ell / 2,
        };
        let (a_call, a_held) = call_counts(a, probes).ok_or_else(too_small)?;
        let (delta_call, delta_held) = call_counts(d, probes).ok_or_else(too_small)?;
        Ok(Self {
            a_call,
            delta_call,
            a_held,
            delta_held,
            reuse_sketch: false,
        })
    }

    pub fn a_budget(&self) -> usize {
        self.a_call.iter().sum()
    }

    pub fn delta_budget(&self) -> usize {
        self.delta_call.iter().sum()
    }

    /// Upper bound on base applications per step.
    pub fn max_applies(&self) -> usize {
        let shared = if self.reuse_sketch {
            self.delta_call[0]
        } else {
            0
        };
        self.a_budget() + 2 * self.delta_budget() - shared
    }
}

/// `t_1 = h++_{l0}(A_1)`, `v_1 = 8 K / l0`.
pub fn deltashiftpp_init(
    oracle_first: &dyn MatVecOracle,
    ell0: usize,
    seed: u64,
    probes: GammaProbes,
) -> Result<EstimatorState> {
    let ([k, p, r], held) = call_counts(ell0, probes).ok_or_else(|| {
        Error::Budget(format!(
            "DeltaShift++ initial budget {ell0} below {}",
            min_initial_budget(probes)
        ))
    })?;
    let n = oracle_first.dim();
    let sketch = rademacher_batch_tagged(seed, 1, tags::HUTCHPP_SKETCH, k, n);
    let resid = rademacher_batch_tagged(seed, 1, tags::HUTCHPP_RESIDUAL, r, n);
    let ys = oracle_first.apply_block(&sketch.vectors);
    let out = hutchpp_from_sketch(oracle_first, &ys, k, p, &resid.vectors, held);
    Ok(EstimatorState {
        t: out.estimate,
        v: 8.0 * out.residual_frob_sq / ell0 as f64,
        step: 1,
        seed,
        ell: ell0,
        ell0,
        gamma_mode: GammaMode::Auto(probes),
    })
}

/// Minimizer of `g^2 a + (1-g)^2 b` over `[0, 1]`; 1 when both vanish.
pub fn plusplus_gamma(a: f64, b: f64) -> f64 {
    let denom = a + b;
    if denom <= 0.0 || !denom.is_finite() {
        1.0
    } else {
        (b / denom).clamp(0.0, 1.0)
    }
}

/// Result of one DeltaShift++ step including both Hutch++ outputs.
#[derive(Clone, Debug)]
pub struct PlusPlusStep {
    pub outcome: StepOutcome,
    pub a_call: HutchPPOutput,
    pub delta_call: HutchPPOutput,
}

pub fn deltashiftpp_step(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    ell: usize,
    opts: PlusPlusOptions,
) -> Result<PlusPlusStep> {
    let probes = match state.gamma_mode {
        GammaMode::Auto(p) => p,
        GammaMode::Fixed(_) => GammaProbes::default(),
    };
    let plan = PlusPlusPlan::new(ell, opts, probes)?;
    deltashiftpp_step_planned(state, oracle_prev, oracle_cur, &plan)
}

pub fn deltashiftpp_step_planned(
    state: &mut EstimatorState,
    oracle_prev: &dyn MatVecOracle,
    oracle_cur: &dyn MatVecOracle,
    plan: &PlusPlusPlan,
) -> Result<PlusPlusStep> {
    if state.step == 0 {
        return Err(Error::invalid("estimator state is not initialized"));
    }
    if oracle_prev.dim() != oracle_cur.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle_prev.dim(),
            found: oracle_cur.dim(),
        });
    }
    let j = (state.step + 1) as u64;
    let n = oracle_cur.dim();
    let seed = state.seed;
    let delta = DifferenceOracle {
        cur: oracle_cur,
        prev: oracle_prev,
    };

    let [ka, pa, ra] = plan.a_call;
    let [kd, pd, rd] = plan.delta_call;
    let sketch_a = rademacher_batch_tagged(seed, j, tags::HUTCHPP_SKETCH, ka, n);
    let resid_a = rademacher_batch_tagged(seed, j, tags::HUTCHPP_RESIDUAL, ra, n);
    let cur_sketch = oracle_cur.apply_block(&sketch_a.vectors);
    let a_out = hutchpp_from_sketch(
        oracle_cur,
        &cur_sketch,
        ka,
        pa,
        &resid_a.vectors,
        plan.a_held,
    );

    let resid_d = rademacher_batch_tagged(seed, j, tags::DELTA_RESIDUAL, rd, n);
    let d_out = if plan.reuse_sketch {
        let prev_sketch = oracle_prev.apply_block(&sketch_a.vectors);
        hutchpp_from_sketch(
            &delta,
            &(&cur_sketch - prev_sketch),
            kd,
            pd,
            &resid_d.vectors,
            plan.delta_held,
        )
    } else {
        let sketch_d = rademacher_batch_tagged(seed, j, tags::DELTA_SKETCH, kd, n);
        let ys = delta.apply_block(&sketch_d.vectors);
        hutchpp_from_sketch(&delta, &ys, kd, pd, &resid_d.vectors, plan.delta_held)
    };

    let a = 8.0 * a_out.residual_frob_sq / plan.a_budget() as f64;
    let b = state.v + 8.0 * d_out.residual_frob_sq / plan.delta_budget() as f64;
    let gamma = plusplus_gamma(a, b);
    let keep = 1.0 - gamma;
    state.t = gamma * a_out.estimate + keep * (state.t + d_out.estimate);
    state.v = gamma * gamma * a + keep * keep * b;
    state.step += 1;
    state.ell = plan.a_budget() + plan.delta_budget();
    Ok(PlusPlusStep {
        outcome: StepOutcome {
            estimate: state.t,
            gamma: Some(gamma),
        },
        a_call: a_out,
        delta_call: d_out,
    })
}
