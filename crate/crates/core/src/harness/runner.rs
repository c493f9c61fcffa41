use super::budget::feasible_plan;
use super::config::ExperimentConfig;
use super::sequences::{build_sequence, MatrixSequence, StepMatrix, TruthKind};
use crate::error::{Error, Result};
use crate::estimators::{DynamicEstimator, EstimatorPlan};
use crate::oracle::{counted, LedgerSnapshot, MatVecLedger, MatVecOracle};

/// One output row.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub step: usize,
    pub estimate: f64,
    pub ground_truth: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    /// `|t_j - tr| / ||A_j||_F`.
    pub scaled_error: Option<f64>,
    /// Oracle applications in this step.
    pub matvecs_step: u64,
    pub matvecs_cum: u64,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub plan: EstimatorPlan,
    pub ledger: LedgerSnapshot,
    /// `key=value` header lines: the config, then run facts.
    pub header: Vec<(String, String)>,
}

impl ExperimentOutput {
    pub fn header_lines(&self) -> Vec<String> {
        self.header
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }
}

/// Builds the configured sequence and runs the estimator over it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let plan = feasible_plan(config)?;
    let mut seq = build_sequence(config)?;
    run_on_sequence(config, plan, seq.as_mut())
}

/// Materializes the sequence (and its ground truth) once for reuse across
/// probe seeds.
pub fn prepare_steps(config: &ExperimentConfig) -> Result<PreparedSequence> {
    config.validate()?;
    let mut seq = build_sequence(config)?;
    let steps = (0..config.steps)
        .map(|_| seq.advance())
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSequence {
        dim: seq.dim(),
        base_cost: seq.base_cost(),
        metadata: seq.metadata(),
        steps,
        next: 0,
    })
}

/// A sequence replayed from memory.
#[derive(Clone)]
pub struct PreparedSequence {
    dim: usize,
    base_cost: u64,
    metadata: Vec<(String, String)>,
    steps: Vec<StepMatrix>,
    next: usize,
}

impl PreparedSequence {
    pub fn steps(&self) -> &[StepMatrix] {
        &self.steps
    }

    pub fn rewind(&mut self) {
        self.next = 0;
    }
}

impl MatrixSequence for PreparedSequence {
    fn dim(&self) -> usize {
        self.dim
    }

    fn base_cost(&self) -> u64 {
        self.base_cost
    }

    fn metadata(&self) -> Vec<(String, String)> {
        self.metadata.clone()
    }

    fn advance(&mut self) -> Result<StepMatrix> {
        let s = self
            .steps
            .get(self.next)
            .cloned()
            .ok_or_else(|| Error::invalid("prepared sequence exhausted"))?;
        self.next += 1;
        Ok(s)
    }
}

/// Runs `config` against a prepared sequence; the sequence's own seed
/// replaces `sequence_seed`.
pub fn run_prepared(
    config: &ExperimentConfig,
    prepared: &PreparedSequence,
) -> Result<ExperimentOutput> {
    let plan = feasible_plan(config)?;
    let mut seq = prepared.clone();
    seq.rewind();
    run_on_sequence(config, plan, &mut seq)
}

fn run_on_sequence(
    config: &ExperimentConfig,
    plan: EstimatorPlan,
    seq: &mut dyn MatrixSequence,
) -> Result<ExperimentOutput> {
    let mut estimator = DynamicEstimator::new(plan, config.seed)?;
    let ledger = MatVecLedger::new();
    let mut records = Vec::with_capacity(config.steps);
    let mut prev: Option<StepMatrix> = None;
    let mut truth_kind = None;
    for j in 1..=config.steps {
        let cur = seq.advance()?;
        if cur.oracle.dim() != seq.dim() {
            return Err(Error::DimensionMismatch {
                expected: seq.dim(),
                found: cur.oracle.dim(),
            });
        }
        let cur_counted = counted(&*cur.oracle, &ledger, j);
        let prev_counted = prev.as_ref().map(|p| counted(&*p.oracle, &ledger, j));
        let out = estimator.step(
            prev_counted.as_ref().map(|p| p as &dyn MatVecOracle),
            &cur_counted,
        )?;
        if !out.estimate.is_finite() {
            return Err(Error::NonFinite);
        }
        let truth = cur.truth.map(|t| t.value);
        if let Some(t) = cur.truth {
            truth_kind.get_or_insert(t.kind);
        }
        let abs_error = truth.map(|t| (out.estimate - t).abs());
        let rel_error = match (abs_error, truth) {
            (Some(e), Some(t)) if t != 0.0 => Some(e / t.abs()),
            _ => None,
        };
        let scaled_error = match (abs_error, cur.frobenius) {
            (Some(e), Some(f)) if f > 0.0 => Some(e / f),
            _ => None,
        };
        let matvecs_step = ledger.calls_at(j);
        records.push(ExperimentRecord {
            step: j,
            estimate: out.estimate,
            ground_truth: truth,
            abs_error,
            rel_error,
            scaled_error,
            matvecs_step,
            matvecs_cum: ledger.oracle_calls(),
            gamma: out.gamma,
        });
        prev = Some(cur);
    }

    let snapshot = ledger.snapshot();
    let mut header = config.describe();
    let facts = [
        ("dim", seq.dim().to_string()),
        ("base_cost_per_apply", seq.base_cost().to_string()),
        ("plan_ell0", plan.ell0.to_string()),
        ("plan_ell", plan.ell.to_string()),
        (
            "ground_truth",
            truth_kind.map_or("none", TruthKind::name).to_string(),
        ),
        ("total_oracle_calls", snapshot.oracle_calls.to_string()),
        (
            "total_base_matvecs",
            snapshot.total_base_matvecs.to_string(),
        ),
    ];
    header.extend(facts.into_iter().map(|(k, v)| (k.to_string(), v)));
    header.extend(seq.metadata());
    Ok(ExperimentOutput {
        records,
        plan,
        ledger: snapshot,
        header,
    })
}
