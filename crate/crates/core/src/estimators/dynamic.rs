//! Uniform step-by-step driver over all estimators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::deltashift::{deltashift_init, deltashift_step, norestart_step};
use super::deltashiftpp::{
    deltashiftpp_init, deltashiftpp_step_planned, min_initial_budget, PlusPlusOptions, PlusPlusPlan,
};
use super::restart::{fresh_state, is_restart_step, restart_applies};
use super::{hutchinson, EstimatorState, GammaMode, GammaProbes, StepOutcome};
use crate::error::{Error, Result};
use crate::oracle::MatVecOracle;
use crate::probes::rademacher_batch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Hutchinson,
    Norestart,
    Restart,
    DeltashiftFixed,
    DeltashiftAuto,
    Deltashiftpp,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Hutchinson,
        EstimatorKind::Norestart,
        EstimatorKind::Restart,
        EstimatorKind::DeltashiftFixed,
        EstimatorKind::DeltashiftAuto,
        EstimatorKind::Deltashiftpp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Hutchinson => "hutchinson",
            EstimatorKind::Norestart => "norestart",
            EstimatorKind::Restart => "restart",
            EstimatorKind::DeltashiftFixed => "deltashift_fixed",
            EstimatorKind::DeltashiftAuto => "deltashift_auto",
            EstimatorKind::Deltashiftpp => "deltashiftpp",
        }
    }

    /// Whether non-initial steps query both `A_{j-1}` and `A_j`.
    pub fn is_paired(self) -> bool {
        !matches!(
            self,
            EstimatorKind::Hutchinson | EstimatorKind::Deltashiftpp
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// Fully resolved per-step probe counts for one estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorPlan {
    pub kind: EstimatorKind,
    /// Probes (or Hutch++ budget) for step 1 and every restart.
    pub ell0: usize,
    /// Probes per step after the first. For DeltaShift++ this is the step's
    /// Hutch++ budget, split according to `plusplus`.
    pub ell: usize,
    pub gamma: Option<f64>,
    pub restart_every: usize,
    pub plusplus: PlusPlusOptions,
    /// Probes behind the adaptive `gamma` of DeltaShift and DeltaShift++.
    pub gamma_probes: GammaProbes,
}

impl EstimatorPlan {
    pub fn validate(&self) -> Result<()> {
        if self.ell0 == 0 || self.ell == 0 {
            return Err(Error::Budget(format!(
                "{} needs positive probe counts (ell0 = {}, ell = {})",
                self.kind, self.ell0, self.ell
            )));
        }
        match self.kind {
            EstimatorKind::DeltashiftFixed => match self.gamma {
                Some(g) if (0.0..=1.0).contains(&g) => {}
                Some(g) => return Err(Error::invalid(format!("gamma {g} outside [0, 1]"))),
                None => return Err(Error::invalid("deltashift_fixed requires gamma")),
            },
            EstimatorKind::Restart if self.restart_every == 0 => {
                return Err(Error::invalid("restart period must be at least 1"))
            }
            EstimatorKind::DeltashiftAuto => {
                if self.gamma_probes == GammaProbes::HeldOut && self.ell0.min(self.ell) < 2 {
                    return Err(Error::Budget(
                        "deltashift_auto with held-out gamma probes needs at least 2 probes per step"
                            .into(),
                    ));
                }
            }
            EstimatorKind::Deltashiftpp => {
                let min = min_initial_budget(self.gamma_probes);
                if self.ell0 < min {
                    return Err(Error::Budget(format!(
                        "DeltaShift++ initial budget {} below {min}",
                        self.ell0
                    )));
                }
                PlusPlusPlan::new(self.ell, self.plusplus, self.gamma_probes)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Closed-form oracle applications over `m` steps. Exact for every
    /// estimator except DeltaShift++, where it is an upper bound (Hutch++
    /// skips projections for numerically null sketch directions).
    pub fn expected_applies(&self, m: usize) -> u64 {
        if m == 0 {
            return 0;
        }
        let rest = (m - 1) as u64;
        let (l0, l) = (self.ell0 as u64, self.ell as u64);
        match self.kind {
            EstimatorKind::Hutchinson => l0 + l * rest,
            EstimatorKind::Norestart
            | EstimatorKind::DeltashiftFixed
            | EstimatorKind::DeltashiftAuto => l0 + 2 * l * rest,
            EstimatorKind::Restart => restart_applies(m, self.ell0, self.ell, self.restart_every),
            EstimatorKind::Deltashiftpp => {
                let per = PlusPlusPlan::new(self.ell, self.plusplus, self.gamma_probes)
                    .map(|p| p.max_applies() as u64)
                    .unwrap_or(0);
                l0 + per * rest
            }
        }
    }
}

/// Step-by-step state machine for any estimator.
#[derive(Clone, Debug)]
pub struct DynamicEstimator {
    plan: EstimatorPlan,
    seed: u64,
    state: Option<EstimatorState>,
    pp_plan: Option<PlusPlusPlan>,
}

impl DynamicEstimator {
    pub fn new(plan: EstimatorPlan, seed: u64) -> Result<Self> {
        plan.validate()?;
        let pp_plan = match plan.kind {
            EstimatorKind::Deltashiftpp => Some(PlusPlusPlan::new(
                plan.ell,
                plan.plusplus,
                plan.gamma_probes,
            )?),
            _ => None,
        };
        Ok(Self {
            plan,
            seed,
            state: None,
            pp_plan,
        })
    }

    pub fn plan(&self) -> &EstimatorPlan {
        &self.plan
    }

    pub fn state(&self) -> Option<&EstimatorState> {
        self.state.as_ref()
    }

    /// Index of the next step (1-based).
    pub fn next_step(&self) -> usize {
        self.state.as_ref().map_or(1, |s| s.step + 1)
    }

    /// Whether the next step will query `A_{j-1}`.
    pub fn needs_previous(&self) -> bool {
        let j = self.next_step();
        if j == 1 {
            return false;
        }
        match self.plan.kind {
            EstimatorKind::Hutchinson => false,
            EstimatorKind::Restart => !is_restart_step(j, self.plan.restart_every),
            _ => true,
        }
    }

    /// Advances one step. `prev` must be `A_{j-1}` whenever
    /// [`DynamicEstimator::needs_previous`] is true.
    pub fn step(
        &mut self,
        prev: Option<&dyn MatVecOracle>,
        cur: &dyn MatVecOracle,
    ) -> Result<StepOutcome> {
        let j = self.next_step();
        let p = &self.plan;
        let seed = self.seed;
        let need_prev = self.needs_previous();
        let prev = match (need_prev, prev) {
            (true, Some(o)) => Some(o),
            (true, None) => {
                return Err(Error::invalid(format!(
                    "{} step {j} needs the previous oracle",
                    p.kind
                )))
            }
            (false, _) => None,
        };

        if j == 1 {
            let state = match p.kind {
                EstimatorKind::Hutchinson | EstimatorKind::Restart => {
                    fresh_state(cur, 1, p.ell0, seed)?
                }
                EstimatorKind::Norestart => {
                    deltashift_init(cur, p.ell0, seed, GammaMode::Fixed(0.0))?
                }
                EstimatorKind::DeltashiftFixed => {
                    deltashift_init(cur, p.ell0, seed, GammaMode::Fixed(p.gamma.unwrap_or(0.0)))?
                }
                EstimatorKind::DeltashiftAuto => {
                    deltashift_init(cur, p.ell0, seed, GammaMode::Auto(p.gamma_probes))?
                }
                EstimatorKind::Deltashiftpp => {
                    deltashiftpp_init(cur, p.ell0, seed, p.gamma_probes)?
                }
            };
            let estimate = state.t;
            self.state = Some(state);
            return Ok(StepOutcome {
                estimate,
                gamma: None,
            });
        }

        let state = self.state.as_mut().expect("initialized after step 1");
        match p.kind {
            EstimatorKind::Hutchinson => {
                let batch = rademacher_batch(seed, j as u64, p.ell, cur.dim());
                state.t = hutchinson(cur, p.ell, &batch)?;
                state.step = j;
                state.ell = p.ell;
                Ok(StepOutcome {
                    estimate: state.t,
                    gamma: None,
                })
            }
            EstimatorKind::Restart if is_restart_step(j, p.restart_every) => {
                *state = fresh_state(cur, j, p.ell0, seed)?;
                Ok(StepOutcome {
                    estimate: state.t,
                    gamma: None,
                })
            }
            EstimatorKind::Restart | EstimatorKind::Norestart => {
                let mut out = norestart_step(state, prev.expect("checked"), cur, p.ell)?;
                out.gamma = None;
                Ok(out)
            }
            EstimatorKind::DeltashiftFixed | EstimatorKind::DeltashiftAuto => {
                deltashift_step(state, prev.expect("checked"), cur, p.ell)
            }
            EstimatorKind::Deltashiftpp => {
                let plan = self.pp_plan.as_ref().expect("planned at construction");
                Ok(deltashiftpp_step_planned(state, prev.expect("checked"), cur, plan)?.outcome)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{counted, dense_oracle, DenseOracle, MatVecLedger};
    use crate::synth::random_symmetric;

    fn plan(kind: EstimatorKind) -> EstimatorPlan {
        EstimatorPlan {
            kind,
            ell0: 12,
            ell: 16,
            gamma: Some(0.25),
            restart_every: 4,
            plusplus: PlusPlusOptions::default(),
            gamma_probes: GammaProbes::default(),
        }
    }

    fn seq(m: usize) -> Vec<DenseOracle> {
        let a = random_symmetric(10, 2);
        (0..m)
            .map(|j| dense_oracle(&a + random_symmetric(10, 50 + j as u64) * 0.1).unwrap())
            .collect()
    }

    #[test]
    fn parse_names() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("nope".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn ledger_matches_closed_form() {
        let m = 11;
        let s = seq(m);
        for kind in EstimatorKind::ALL {
            let ledger = MatVecLedger::new();
            let mut est = DynamicEstimator::new(plan(kind), 3).unwrap();
            for j in 0..m {
                let cur = counted(&s[j], &ledger, j + 1);
                let prev = (j > 0).then(|| counted(&s[j - 1], &ledger, j + 1));
                est.step(prev.as_ref().map(|p| p as &dyn MatVecOracle), &cur)
                    .unwrap();
            }
            let expected = plan(kind).expected_applies(m);
            if kind == EstimatorKind::Deltashiftpp {
                assert!(ledger.oracle_calls() <= expected);
            } else {
                assert_eq!(ledger.oracle_calls(), expected, "{kind}");
            }
        }
    }

    #[test]
    fn missing_previous_is_an_error() {
        let s = seq(2);
        let mut est = DynamicEstimator::new(plan(EstimatorKind::DeltashiftAuto), 1).unwrap();
        est.step(None, &s[0]).unwrap();
        assert!(est.step(None, &s[1]).is_err());
        let mut h = DynamicEstimator::new(plan(EstimatorKind::Hutchinson), 1).unwrap();
        h.step(None, &s[0]).unwrap();
        assert!(h.step(None, &s[1]).is_ok());
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut p = plan(EstimatorKind::DeltashiftFixed);
        p.gamma = None;
        assert!(DynamicEstimator::new(p, 0).is_err());
        p.gamma = Some(1.2);
        assert!(DynamicEstimator::new(p, 0).is_err());
        let mut p = plan(EstimatorKind::Deltashiftpp);
        p.ell = 4;
        assert!(matches!(DynamicEstimator::new(p, 0), Err(Error::Budget(_))));
        let mut p = plan(EstimatorKind::Hutchinson);
        p.ell = 0;
        assert!(DynamicEstimator::new(p, 0).is_err());
    }
}
