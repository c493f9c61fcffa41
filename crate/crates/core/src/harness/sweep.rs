use std::fmt::Write as _;

use super::config::ExperimentConfig;
use super::runner::{prepare_steps, run_prepared, ExperimentOutput};
use crate::error::Result;
use crate::estimators::EstimatorKind;

pub const SUMMARY_HEADER: &str =
    "estimator,budget,seed,mean_abs_error,mean_rel_error,mean_scaled_error,oracle_calls,base_matvecs";

/// Grid of budgets, probe seeds and estimators over one fixed sequence.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub budgets: Vec<u64>,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub estimator: EstimatorKind,
    pub budget: u64,
    pub seed: u64,
    pub mean_abs_error: Option<f64>,
    pub mean_rel_error: Option<f64>,
    pub mean_scaled_error: Option<f64>,
    pub oracle_calls: u64,
    pub base_matvecs: u64,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(
    estimator: EstimatorKind,
    budget: u64,
    seed: u64,
    out: &ExperimentOutput,
) -> SweepRow {
    SweepRow {
        estimator,
        budget,
        seed,
        mean_abs_error: mean(out.records.iter().map(|r| r.abs_error)),
        mean_rel_error: mean(out.records.iter().map(|r| r.rel_error)),
        mean_scaled_error: mean(out.records.iter().map(|r| r.scaled_error)),
        oracle_calls: out.ledger.oracle_calls,
        base_matvecs: out.ledger.total_base_matvecs,
    }
}

/// Runs the grid. The sequence is built once per budget and shared by all
/// seeds and estimators.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &budget in &sweep.budgets {
        let at_budget = ExperimentConfig {
            budget,
            sequence_seed: Some(sweep.base.sequence_seed()),
            ..sweep.base.clone()
        };
        let prepared = prepare_steps(&at_budget)?;
        for &estimator in &sweep.estimators {
            for &seed in &sweep.seeds {
                let config = ExperimentConfig {
                    estimator,
                    seed,
                    ..at_budget.clone()
                };
                let out = run_prepared(&config, &prepared)?;
                rows.push(summarize(estimator, budget, seed, &out));
            }
        }
    }
    Ok(rows)
}

pub fn summary_to_csv(rows: &[SweepRow], comments: &[String]) -> String {
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.estimator,
            r.budget,
            r.seed,
            o(r.mean_abs_error),
            o(r.mean_rel_error),
            o(r.mean_scaled_error),
            r.oracle_calls,
            r.base_matvecs
        );
    }
    s
}
