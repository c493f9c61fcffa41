//! Static and dynamic trace estimators.

mod deltashift;
mod deltashiftpp;
mod dynamic;
mod hutchinson;
mod hutchpp;
mod restart;

pub use deltashift::{
    deltashift_auto_step, deltashift_fixed_step, deltashift_init, deltashift_step, norestart_step,
    optimal_gamma,
};
pub use deltashiftpp::{
    deltashiftpp_init, deltashiftpp_step, deltashiftpp_step_planned, min_initial_budget,
    plusplus_gamma, BudgetUnit, PlusPlusOptions, PlusPlusPlan, PlusPlusStep,
};
pub use dynamic::{DynamicEstimator, EstimatorKind, EstimatorPlan};
pub use hutchinson::{hutchinson, hutchinson_exact_variance};
pub use hutchpp::{
    hutchpp, hutchpp_detailed, hutchpp_tagged, HutchPPConfig, HutchPPCounts, HutchPPOutput,
    RANK_TOLERANCE,
};
pub use restart::{is_restart_step, restart_applies, restart_run};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaMode {
    Fixed(f64),
    Auto(GammaProbes),
}

/// Which probes feed the statistics behind an adaptive damping factor
/// (`N`, `C` and the variance proxy, or the Hutch++ residual norms).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaProbes {
    /// A third of the probes (at least one) measure the statistics and the
    /// rest estimate the trace. `gamma` and `v` are then independent of the
    /// trace probes, which keeps the running estimate exactly unbiased.
    #[default]
    HeldOut,
    /// Every probe feeds both. Uses the products more fully but couples
    /// `gamma` to the estimate it damps, which biases `t_j`.
    Shared,
}

impl GammaProbes {
    /// Probes reserved for the statistics out of `count`; `None` when
    /// `count` is too small to split.
    pub fn held_out(self, count: usize) -> Option<usize> {
        match (self, count) {
            (GammaProbes::Shared, _) => Some(0),
            (GammaProbes::HeldOut, 0..=1) => None,
            (GammaProbes::HeldOut, c) => Some((c / 3).max(1)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GammaProbes::HeldOut => "held_out",
            GammaProbes::Shared => "shared",
        }
    }
}

/// Running state of a dynamic estimator after step `step` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    /// Current estimate `t_j`.
    pub t: f64,
    /// Tracked variance proxy; always nonnegative.
    pub v: f64,
    pub step: usize,
    pub seed: u64,
    /// Probes used by the most recent step.
    pub ell: usize,
    pub ell0: usize,
    pub gamma_mode: GammaMode,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub estimate: f64,
    pub gamma: Option<f64>,
}
