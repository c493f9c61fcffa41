//! Experiment runner: budget allocation, sequence construction, ground
//! truth, error metrics and CSV output.

mod budget;
mod config;
mod output;
mod runner;
mod sequences;
mod sweep;

pub use budget::{allocate_budget, feasible_plan, planned_spend, resolve_plan, BudgetScheme};
pub use config::{parse_perturbation, CountMode, Experiment, ExperimentConfig};
pub use output::{records_to_csv, write_records, RECORD_HEADER};
pub use runner::{
    prepare_steps, run_experiment, run_prepared, ExperimentOutput, ExperimentRecord,
    PreparedSequence,
};
pub use sequences::{
    build_sequence, ChebyshevSequence, ConnectivitySequence, MatrixSequence, StepMatrix,
    SynthSequence, TriangleSequence, Truth, TruthKind,
};
pub use sweep::{run_sweep, summarize, summary_to_csv, SweepConfig, SweepRow, SUMMARY_HEADER};
