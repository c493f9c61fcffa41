use dyntrace::estimators::{EstimatorKind, GammaProbes};
use dyntrace::harness::{
    allocate_budget, planned_spend, records_to_csv, run_experiment, write_records, BudgetScheme,
    CountMode, Experiment, ExperimentConfig, ExperimentRecord, RECORD_HEADER,
};
use proptest::prelude::*;

fn small(kind: EstimatorKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        experiment: Experiment::Synth,
        estimator: kind,
        budget: 400,
        steps: 6,
        seed,
        nodes: Some(12),
        gamma: Some(0.5),
        restart_every: 3,
        ..ExperimentConfig::default()
    }
}

fn field(s: &str) -> Option<f64> {
    (!s.is_empty()).then(|| s.parse().unwrap())
}

/// Reads back the rows written by `records_to_csv`.
fn parse_records(csv: &str) -> Vec<ExperimentRecord> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some(RECORD_HEADER));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 9);
            ExperimentRecord {
                step: f[0].parse().unwrap(),
                estimate: f[1].parse().unwrap(),
                ground_truth: field(f[2]),
                abs_error: field(f[3]),
                rel_error: field(f[4]),
                scaled_error: field(f[5]),
                matvecs_step: f[6].parse().unwrap(),
                matvecs_cum: f[7].parse().unwrap(),
                gamma: field(f[8]),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csv_round_trips(kind_idx in 0usize..6, seed in 0u64..1000) {
        let out = run_experiment(&small(EstimatorKind::ALL[kind_idx], seed)).unwrap();
        let csv = records_to_csv(&out.records, &out.header_lines());
        prop_assert_eq!(parse_records(&csv), out.records);
    }

    #[test]
    fn spend_stays_within_budget(
        kind_idx in 0usize..6,
        budget in 60u64..2000,
        steps in 1usize..8,
        calls in any::<bool>(),
        shared in any::<bool>(),
    ) {
        let mode = if calls { CountMode::OracleCalls } else { CountMode::BaseMatvecs };
        let config = ExperimentConfig {
            budget,
            steps,
            count_mode: mode,
            restart_every: steps,
            gamma_probes: if shared { GammaProbes::Shared } else { GammaProbes::HeldOut },
            ..small(EstimatorKind::ALL[kind_idx], 3)
        };
        // infeasible budgets are rejected before any work
        let Ok(out) = run_experiment(&config) else { return Ok(()) };
        prop_assert!(planned_spend(&out.plan, steps, mode) <= budget);
        prop_assert!(out.ledger.oracle_calls <= out.plan.expected_applies(steps));
        let last = out.records.last().unwrap();
        prop_assert_eq!(last.matvecs_cum, out.ledger.oracle_calls);
        let summed: u64 = out.records.iter().map(|r| r.matvecs_step).sum();
        prop_assert_eq!(summed, out.ledger.oracle_calls);
    }

    #[test]
    fn allocations_never_exceed_total(
        q_total in 100u64..100_000,
        m in 1usize..100,
        q in 1usize..30,
        first in 0.05f64..0.95,
    ) {
        let q = q.min(m);
        for scheme in [BudgetScheme::Uniform, BudgetScheme::RestartBlocks { q, first_fraction: first }] {
            let b = allocate_budget(q_total, m, scheme).unwrap();
            prop_assert_eq!(b.len(), m);
            prop_assert!(b.iter().sum::<u64>() <= q_total);
        }
    }
}

#[test]
fn gamma_column_only_for_damped_estimators() {
    for kind in EstimatorKind::ALL {
        let out = run_experiment(&small(kind, 1)).unwrap();
        assert!(out.records[0].gamma.is_none(), "{kind} step 1");
        let damped = matches!(
            kind,
            EstimatorKind::DeltashiftFixed
                | EstimatorKind::DeltashiftAuto
                | EstimatorKind::Deltashiftpp
        );
        for r in &out.records[1..] {
            assert_eq!(r.gamma.is_some(), damped, "{kind} step {}", r.step);
            if let Some(g) = r.gamma {
                assert!((0.0..=1.0).contains(&g));
            }
        }
    }
}

#[test]
fn empty_records_still_write_header() {
    let csv = records_to_csv(&[], &["note=1".to_string()]);
    assert_eq!(csv, format!("# note=1\n{RECORD_HEADER}\n"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/out.csv");
    write_records(&path, &[], &[]).unwrap();
    assert_eq!(
        std::fs::read_to_string(path).unwrap(),
        format!("{RECORD_HEADER}\n")
    );
}

#[test]
fn runs_are_reproducible() {
    for experiment in [
        Experiment::Synth,
        Experiment::Triangles,
        Experiment::Connectivity,
        Experiment::Moments,
    ] {
        let config = ExperimentConfig {
            experiment,
            nodes: Some(30),
            budget: 600,
            steps: 5,
            seed: 11,
            insert_updates: 3,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(
            records_to_csv(&a.records, &a.header_lines()),
            records_to_csv(&b.records, &b.header_lines()),
            "{experiment}"
        );
        let other = run_experiment(&ExperimentConfig {
            seed: 12,
            ..config.clone()
        })
        .unwrap();
        assert_ne!(a.records, other.records, "{experiment}");
    }
}

#[test]
fn header_records_gamma_probe_choice() {
    let shared = ExperimentConfig {
        gamma_probes: GammaProbes::Shared,
        ..small(EstimatorKind::DeltashiftAuto, 0)
    };
    let out = run_experiment(&shared).unwrap();
    assert!(out
        .header_lines()
        .iter()
        .any(|l| l == "gamma_probes=shared"));
}
