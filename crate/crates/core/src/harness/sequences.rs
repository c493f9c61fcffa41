use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use super::config::{Experiment, ExperimentConfig};
use crate::dyngraph::{erdos_renyi, load_edge_list, CliqueSchedule, DynamicGraph};
use crate::error::{Error, Result};
use crate::estimators::hutchinson;
use crate::matfunc::{chebyshev_scalar, ChebyshevOracle, ChebyshevScaling, LanczosExpOracle};
use crate::oracle::{power_oracle, DenseOracle, MatVecOracle};
use crate::probes::rademacher_batch_tagged;
use crate::rng::{derive_seed, tags};
use crate::synth::{MatrixSequenceSpec, SyntheticSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthKind {
    Exact,
    /// High-budget Hutchinson estimate standing in for the trace.
    Reference,
}

impl TruthKind {
    pub fn name(self) -> &'static str {
        match self {
            TruthKind::Exact => "exact",
            TruthKind::Reference => "reference",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truth {
    pub value: f64,
    pub kind: TruthKind,
}

/// One matrix of a sequence, with whatever reference data is available.
#[derive(Clone)]
pub struct StepMatrix {
    pub oracle: Arc<dyn MatVecOracle>,
    pub truth: Option<Truth>,
    /// `||A_j||_F` when it can be computed exactly.
    pub frobenius: Option<f64>,
}

/// A dynamic matrix `A_1, A_2, ...` exposed one step at a time.
pub trait MatrixSequence {
    fn dim(&self) -> usize;

    /// `matvec_cost` of every oracle the sequence yields.
    fn base_cost(&self) -> u64;

    /// Extra `key=value` facts for the output header.
    fn metadata(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    /// Moves to the next matrix; the first call yields `A_1`.
    fn advance(&mut self) -> Result<StepMatrix>;
}

fn reference_truth(
    oracle: &dyn MatVecOracle,
    probes: usize,
    seed: u64,
    step: u64,
) -> Result<Truth> {
    let batch = rademacher_batch_tagged(
        derive_seed(seed, tags::REFERENCE),
        step,
        tags::REFERENCE,
        probes,
        oracle.dim(),
    );
    Ok(Truth {
        value: hutchinson(oracle, probes, &batch)?,
        kind: TruthKind::Reference,
    })
}

fn reference_probes(config: &ExperimentConfig) -> usize {
    let per_step = (config.budget / config.steps as u64).max(1) as usize;
    per_step * config.reference_multiplier
}

pub struct SynthSequence {
    inner: SyntheticSequence,
}

impl SynthSequence {
    pub fn new(spec: MatrixSequenceSpec) -> Result<Self> {
        Ok(Self {
            inner: SyntheticSequence::new(spec)?,
        })
    }
}

impl MatrixSequence for SynthSequence {
    fn dim(&self) -> usize {
        self.inner.spec().n
    }

    fn base_cost(&self) -> u64 {
        1
    }

    fn advance(&mut self) -> Result<StepMatrix> {
        let a = self
            .inner
            .advance()?
            .ok_or_else(|| Error::invalid("synthetic sequence exhausted"))?
            .clone();
        let truth = Some(Truth {
            value: a.trace(),
            kind: TruthKind::Exact,
        });
        let frobenius = Some(a.norm());
        Ok(StepMatrix {
            oracle: Arc::new(DenseOracle::new(a)?),
            truth,
            frobenius,
        })
    }
}

fn initial_graph(config: &ExperimentConfig) -> Result<DynamicGraph> {
    match &config.graph {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            load_edge_list(BufReader::new(file), config.format)
        }
        None => {
            let n = config.nodes();
            if n < 2 {
                return Err(Error::invalid("random graph needs at least two nodes"));
            }
            let p = (config.avg_degree() / (n - 1) as f64).clamp(0.0, 1.0);
            erdos_renyi(n, p, config.sequence_seed())
        }
    }
}

/// Clique insertions and deletions; oracle `B^3`, truth `6 * triangles`.
pub struct TriangleSequence {
    graph: DynamicGraph,
    schedule: CliqueSchedule,
    seed: u64,
    step: u64,
}

impl TriangleSequence {
    pub fn new(graph: DynamicGraph, schedule: CliqueSchedule, seed: u64) -> Self {
        Self {
            graph,
            schedule,
            seed,
            step: 0,
        }
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }
}

impl MatrixSequence for TriangleSequence {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn base_cost(&self) -> u64 {
        3
    }

    fn metadata(&self) -> Vec<(String, String)> {
        vec![("initial_edges".into(), self.graph.edge_count().to_string())]
    }

    fn advance(&mut self) -> Result<StepMatrix> {
        self.step += 1;
        if self.step > 1 {
            self.schedule
                .apply(&mut self.graph, self.seed, self.step - 1)?;
        }
        let truth = match self.graph.exact_triangles() {
            Ok(t) => Some(Truth {
                value: 6.0 * t as f64,
                kind: TruthKind::Exact,
            }),
            Err(Error::GraphTooLarge(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(StepMatrix {
            oracle: Arc::new(power_oracle(self.graph.adjacency_oracle(), 3)?),
            truth,
            frobenius: None,
        })
    }
}

/// One random edge per step; oracle `exp(B)` by Lanczos.
pub struct ConnectivitySequence {
    graph: DynamicGraph,
    lanczos_steps: usize,
    seed: u64,
    step: u64,
    dense_limit: usize,
    reference_probes: usize,
}

impl ConnectivitySequence {
    pub fn new(
        graph: DynamicGraph,
        lanczos_steps: usize,
        seed: u64,
        dense_limit: usize,
        reference_probes: usize,
    ) -> Self {
        Self {
            graph,
            lanczos_steps,
            seed,
            step: 0,
            dense_limit,
            reference_probes,
        }
    }
}

impl MatrixSequence for ConnectivitySequence {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn base_cost(&self) -> u64 {
        self.lanczos_steps as u64
    }

    fn metadata(&self) -> Vec<(String, String)> {
        vec![("initial_edges".into(), self.graph.edge_count().to_string())]
    }

    fn advance(&mut self) -> Result<StepMatrix> {
        self.step += 1;
        if self.step > 1 {
            self.graph.add_random_edge(self.seed, self.step - 1)?;
        }
        let oracle = LanczosExpOracle::new(self.graph.adjacency_oracle(), self.lanczos_steps)?;
        let (truth, frobenius) = if self.graph.n() <= self.dense_limit {
            let eig = SymmetricEigen::new(self.graph.dense_adjacency()).eigenvalues;
            let value = eig.iter().map(|l| l.exp()).sum();
            let frob = eig.iter().map(|l| (2.0 * l).exp()).sum::<f64>().sqrt();
            (
                Some(Truth {
                    value,
                    kind: TruthKind::Exact,
                }),
                Some(frob),
            )
        } else {
            (
                Some(reference_truth(
                    &oracle,
                    self.reference_probes,
                    self.seed,
                    self.step,
                )?),
                None,
            )
        };
        Ok(StepMatrix {
            oracle: Arc::new(oracle),
            truth,
            frobenius,
        })
    }
}

/// `T_q(H_j / s)` for a slowly changing symmetric `H_j`, with `s` fixed
/// from power iteration on `H_1`.
pub struct ChebyshevSequence {
    inner: SyntheticSequence,
    degree: usize,
    scaling: Option<ChebyshevScaling>,
    power_iters: usize,
    margin: f64,
    seed: u64,
    step: u64,
    dense_limit: usize,
    reference_probes: usize,
}

impl ChebyshevSequence {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: MatrixSequenceSpec,
        degree: usize,
        power_iters: usize,
        margin: f64,
        dense_limit: usize,
        reference_probes: usize,
    ) -> Result<Self> {
        Ok(Self {
            seed: spec.seed,
            inner: SyntheticSequence::new(spec)?,
            degree,
            scaling: None,
            power_iters,
            margin,
            step: 0,
            dense_limit,
            reference_probes,
        })
    }

    pub fn scaling(&self) -> Option<ChebyshevScaling> {
        self.scaling
    }
}

impl MatrixSequence for ChebyshevSequence {
    fn dim(&self) -> usize {
        self.inner.spec().n
    }

    fn base_cost(&self) -> u64 {
        self.degree as u64
    }

    fn metadata(&self) -> Vec<(String, String)> {
        match self.scaling {
            Some(s) => vec![
                ("scaling_lambda_max".into(), s.lambda_max.to_string()),
                ("scaling_margin".into(), s.margin.to_string()),
            ],
            None => Vec::new(),
        }
    }

    fn advance(&mut self) -> Result<StepMatrix> {
        self.step += 1;
        let h: DMatrix<f64> = self
            .inner
            .advance()?
            .ok_or_else(|| Error::invalid("operator sequence exhausted"))?
            .clone();
        let n = h.nrows();
        let base = Arc::new(DenseOracle::new(h)?);
        let scaling = match self.scaling {
            Some(s) => s,
            None => {
                let s = ChebyshevScaling::estimate(
                    &*base,
                    self.power_iters,
                    derive_seed(self.seed, tags::POWER),
                    self.margin,
                )?;
                self.scaling = Some(s);
                s
            }
        };
        let oracle = ChebyshevOracle::new(Arc::clone(&base), scaling, self.degree)?;
        let (truth, frobenius) = if n <= self.dense_limit {
            let eig = SymmetricEigen::new(base.matrix().clone()).eigenvalues;
            let vals: Vec<f64> = eig
                .iter()
                .map(|l| chebyshev_scalar(self.degree, l / scaling.divisor()))
                .collect();
            (
                Some(Truth {
                    value: vals.iter().sum(),
                    kind: TruthKind::Exact,
                }),
                Some(vals.iter().map(|v| v * v).sum::<f64>().sqrt()),
            )
        } else {
            (
                Some(reference_truth(
                    &oracle,
                    self.reference_probes,
                    self.seed,
                    self.step,
                )?),
                None,
            )
        };
        Ok(StepMatrix {
            oracle: Arc::new(oracle),
            truth,
            frobenius,
        })
    }
}

/// Builds the sequence an experiment config describes.
pub fn build_sequence(config: &ExperimentConfig) -> Result<Box<dyn MatrixSequence>> {
    let seed = config.sequence_seed();
    let spec = || MatrixSequenceSpec {
        n: config.nodes(),
        m: config.steps,
        kind: config.perturbation,
        seed,
        frob_fraction: config.frob_fraction,
    };
    Ok(match config.experiment {
        Experiment::Synth => Box::new(SynthSequence::new(spec())?),
        Experiment::Triangles => Box::new(TriangleSequence::new(
            initial_graph(config)?,
            CliqueSchedule {
                insert_updates: config.insert_updates,
            },
            seed,
        )),
        Experiment::Connectivity => Box::new(ConnectivitySequence::new(
            initial_graph(config)?,
            config.lanczos_steps,
            seed,
            config.dense_limit,
            reference_probes(config),
        )),
        Experiment::Moments => Box::new(ChebyshevSequence::new(
            spec(),
            config.degree,
            config.power_iters,
            config.margin,
            config.dense_limit,
            reference_probes(config),
        )?),
    })
}
