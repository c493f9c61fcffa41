use super::config::{CountMode, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    is_restart_step, BudgetUnit, EstimatorKind, EstimatorPlan, PlusPlusOptions, PlusPlusPlan,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BudgetScheme {
    Uniform,
    /// Even split over `ceil(m / q)` blocks; `first_fraction` of each block
    /// goes to its first step, the rest evenly over the other `q - 1`.
    RestartBlocks {
        q: usize,
        first_fraction: f64,
    },
}

/// Per-step budgets. The sum never exceeds `q_total`.
pub fn allocate_budget(q_total: u64, m: usize, scheme: BudgetScheme) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(Error::invalid("at least one step required"));
    }
    if q_total < m as u64 {
        return Err(Error::Budget(format!(
            "budget {q_total} below step count {m}"
        )));
    }
    match scheme {
        BudgetScheme::Uniform => Ok(vec![q_total / m as u64; m]),
        BudgetScheme::RestartBlocks { q, first_fraction } => {
            if q == 0 || q > m {
                return Err(Error::invalid(format!(
                    "restart period {q} outside 1..={m}"
                )));
            }
            if !(first_fraction > 0.0 && first_fraction < 1.0) {
                return Err(Error::invalid(format!(
                    "first-step fraction {first_fraction} outside (0, 1)"
                )));
            }
            let blocks = m.div_ceil(q) as u64;
            let per_block = q_total / blocks;
            let first = (per_block as f64 * first_fraction).floor() as u64;
            let other = if q > 1 {
                (per_block - first) / (q as u64 - 1)
            } else {
                0
            };
            Ok((1..=m)
                .map(|j| if is_restart_step(j, q) { first } else { other })
                .collect())
        }
    }
}

fn halve(b: u64, mode: CountMode) -> u64 {
    match mode {
        CountMode::BaseMatvecs => b / 2,
        CountMode::OracleCalls => b,
    }
}

/// Probe counts for `config`, before overrides are checked against `Q`.
pub fn resolve_plan(config: &ExperimentConfig) -> Result<EstimatorPlan> {
    config.validate()?;
    let (q_total, m, mode) = (config.budget, config.steps, config.count_mode);
    let per_step = q_total / m as u64;
    let restart_q = config.restart_every.min(m).max(1);
    let blocks = || {
        allocate_budget(
            q_total,
            m,
            BudgetScheme::RestartBlocks {
                q: restart_q,
                first_fraction: config.first_fraction,
            },
        )
    };
    let (ell0, ell) = match config.estimator {
        EstimatorKind::Hutchinson => (per_step, per_step),
        EstimatorKind::DeltashiftFixed | EstimatorKind::DeltashiftAuto => {
            (per_step, halve(per_step, mode))
        }
        EstimatorKind::Restart => {
            let alloc = blocks()?;
            let other = alloc.get(1).copied().unwrap_or(0);
            (alloc[0], halve(other, mode))
        }
        EstimatorKind::Norestart => {
            let first = blocks()?[0];
            let rest = if m > 1 {
                (q_total - first) / (m as u64 - 1)
            } else {
                0
            };
            (first, halve(rest, mode))
        }
        EstimatorKind::Deltashiftpp => (per_step, per_step),
    };
    let plan = EstimatorPlan {
        kind: config.estimator,
        ell0: config.ell0.unwrap_or(ell0 as usize),
        // a single step never uses `ell`; keep the plan valid
        ell: config
            .ell
            .unwrap_or(if m == 1 { ell.max(1) } else { ell } as usize),
        gamma: config.gamma,
        restart_every: config.restart_every,
        plusplus: PlusPlusOptions {
            unit: match mode {
                CountMode::BaseMatvecs => BudgetUnit::Matvecs,
                CountMode::OracleCalls => BudgetUnit::OracleCalls,
            },
            reuse_sketch: config.reuse_sketch,
        },
        gamma_probes: config.gamma_probes,
    };
    plan.validate()?;
    Ok(plan)
}

/// Planned spend over `m` steps in the units of `mode`.
pub fn planned_spend(plan: &EstimatorPlan, m: usize, mode: CountMode) -> u64 {
    match mode {
        CountMode::BaseMatvecs => plan.expected_applies(m),
        CountMode::OracleCalls => {
            let rest = m.saturating_sub(1) as u64;
            let (l0, l) = (plan.ell0 as u64, plan.ell as u64);
            match plan.kind {
                EstimatorKind::Restart => {
                    let r = m.div_ceil(plan.restart_every) as u64;
                    r * l0 + (m as u64 - r) * l
                }
                EstimatorKind::Deltashiftpp => {
                    let per = PlusPlusPlan::new(plan.ell, plan.plusplus, plan.gamma_probes)
                        .map(|p| (p.a_budget() + p.delta_budget()) as u64)
                        .unwrap_or(0);
                    l0 + per * rest
                }
                _ => l0 + l * rest,
            }
        }
    }
}

/// Resolves the plan and rejects it when it would exceed `Q`.
pub fn feasible_plan(config: &ExperimentConfig) -> Result<EstimatorPlan> {
    let plan = resolve_plan(config)?;
    let spend = planned_spend(&plan, config.steps, config.count_mode);
    if spend > config.budget {
        return Err(Error::Budget(format!(
            "{} with ell0 = {}, ell = {} needs {spend} > budget {}",
            plan.kind, plan.ell0, plan.ell, config.budget
        )));
    }
    Ok(plan)
}
