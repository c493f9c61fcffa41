use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dyngraph::EdgeListFormat;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, GammaProbes};
use crate::synth::{PerturbationKind, DEFAULT_PSD_FRACTION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Synth,
    Triangles,
    Connectivity,
    Moments,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Synth => "synth",
            Experiment::Triangles => "triangles",
            Experiment::Connectivity => "connectivity",
            Experiment::Moments => "moments",
        }
    }

    fn default_nodes(self) -> usize {
        match self {
            Experiment::Synth | Experiment::Triangles => 500,
            Experiment::Connectivity | Experiment::Moments => 200,
        }
    }

    fn default_avg_degree(self) -> f64 {
        match self {
            Experiment::Triangles => 10.0,
            _ => 3.0,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::Synth,
            Experiment::Triangles,
            Experiment::Connectivity,
            Experiment::Moments,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown experiment '{s}'")))
    }
}

/// What the budget `Q` counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Probe vectors; a paired DeltaShift probe counts once.
    OracleCalls,
    /// Every application of `A_j` or `A_{j-1}`.
    #[default]
    BaseMatvecs,
}

impl CountMode {
    pub fn name(self) -> &'static str {
        match self {
            CountMode::OracleCalls => "oracle_calls",
            CountMode::BaseMatvecs => "base_matvecs",
        }
    }
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle_calls" => Ok(CountMode::OracleCalls),
            "base_matvecs" => Ok(CountMode::BaseMatvecs),
            _ => Err(Error::invalid(format!("unknown count mode '{s}'"))),
        }
    }
}

fn perturbation_name(kind: PerturbationKind) -> String {
    match kind {
        PerturbationKind::LowPerturb => "low_perturb".into(),
        PerturbationKind::HighPerturb => "high_perturb".into(),
        PerturbationKind::Stationary => "stationary".into(),
        PerturbationKind::LowrankPsd(k) => format!("lowrank_psd:{k}"),
    }
}

/// Parses `low_perturb`, `high_perturb`, `stationary` or `lowrank_psd:K`.
pub fn parse_perturbation(s: &str) -> Result<PerturbationKind> {
    match s {
        "low_perturb" => Ok(PerturbationKind::LowPerturb),
        "high_perturb" => Ok(PerturbationKind::HighPerturb),
        "stationary" => Ok(PerturbationKind::Stationary),
        _ => s
            .strip_prefix("lowrank_psd:")
            .and_then(|k| k.parse().ok())
            .map(PerturbationKind::LowrankPsd)
            .ok_or_else(|| Error::invalid(format!("unknown perturbation '{s}'"))),
    }
}

/// One experiment. Unset optional fields fall back to defaults derived from
/// the budget and the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub estimator: EstimatorKind,
    /// Total budget `Q`.
    pub budget: u64,
    pub steps: usize,
    /// Probe seed.
    pub seed: u64,
    /// Seed for the matrix or graph sequence; defaults to `seed`.
    pub sequence_seed: Option<u64>,
    pub ell: Option<usize>,
    pub ell0: Option<usize>,
    pub gamma: Option<f64>,
    pub restart_every: usize,
    pub first_fraction: f64,
    pub reuse_sketch: bool,
    /// Probes behind the adaptive damping factor.
    pub gamma_probes: GammaProbes,
    pub count_mode: CountMode,
    pub nodes: Option<usize>,
    pub perturbation: PerturbationKind,
    pub frob_fraction: f64,
    pub graph: Option<PathBuf>,
    pub format: EdgeListFormat,
    pub avg_degree: Option<f64>,
    pub insert_updates: usize,
    pub lanczos_steps: usize,
    pub degree: usize,
    pub power_iters: usize,
    pub margin: f64,
    /// Above this dimension ground truth is a reference estimate.
    pub dense_limit: usize,
    pub reference_multiplier: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Synth,
            estimator: EstimatorKind::DeltashiftAuto,
            budget: 10_000,
            steps: 100,
            seed: 0,
            sequence_seed: None,
            ell: None,
            ell0: None,
            gamma: None,
            restart_every: 20,
            first_fraction: 1.0 / 3.0,
            reuse_sketch: false,
            gamma_probes: GammaProbes::HeldOut,
            count_mode: CountMode::BaseMatvecs,
            nodes: None,
            perturbation: PerturbationKind::LowPerturb,
            frob_fraction: DEFAULT_PSD_FRACTION,
            graph: None,
            format: EdgeListFormat::Snap,
            avg_degree: None,
            insert_updates: 75,
            lanczos_steps: crate::matfunc::DEFAULT_LANCZOS_STEPS,
            degree: 1,
            power_iters: 100,
            margin: crate::matfunc::DEFAULT_MARGIN,
            dense_limit: 2000,
            reference_multiplier: 20,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn sequence_seed(&self) -> u64 {
        self.sequence_seed.unwrap_or(self.seed)
    }

    pub fn nodes(&self) -> usize {
        self.nodes.unwrap_or(self.experiment.default_nodes())
    }

    pub fn avg_degree(&self) -> f64 {
        self.avg_degree
            .unwrap_or(self.experiment.default_avg_degree())
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.budget < self.steps as u64 {
            return Err(Error::Budget(format!(
                "budget {} is smaller than the number of steps {}",
                self.budget, self.steps
            )));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!("gamma {g} outside [0, 1]")));
            }
        }
        if self.reference_multiplier < 20 {
            return Err(Error::invalid(
                "reference budget multiplier must be at least 20",
            ));
        }
        if self.lanczos_steps == 0 || self.power_iters == 0 || self.degree == 0 {
            return Err(Error::invalid(
                "lanczos_steps, power_iters and degree must be positive",
            ));
        }
        if !(self.margin.is_finite() && self.margin >= 1.0) {
            return Err(Error::invalid(format!("margin {} below 1", self.margin)));
        }
        Ok(())
    }

    /// `key=value` pairs in a fixed order, for output headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("estimator", self.estimator.to_string()),
            ("budget", self.budget.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("sequence_seed", self.sequence_seed().to_string()),
            ("ell", opt(self.ell.map(|v| v.to_string()))),
            ("ell0", opt(self.ell0.map(|v| v.to_string()))),
            ("gamma", opt(self.gamma.map(|v| v.to_string()))),
            ("restart_every", self.restart_every.to_string()),
            ("first_fraction", self.first_fraction.to_string()),
            ("reuse_sketch", self.reuse_sketch.to_string()),
            ("gamma_probes", self.gamma_probes.name().to_string()),
            ("count_mode", self.count_mode.name().to_string()),
        ];
        match self.experiment {
            Experiment::Synth => {
                out.push(("nodes", self.nodes().to_string()));
                out.push(("perturbation", perturbation_name(self.perturbation)));
                out.push(("frob_fraction", self.frob_fraction.to_string()));
            }
            Experiment::Triangles | Experiment::Connectivity => {
                match &self.graph {
                    Some(p) => {
                        out.push(("graph", p.display().to_string()));
                        out.push((
                            "format",
                            match self.format {
                                EdgeListFormat::Snap => "snap".into(),
                                EdgeListFormat::MatrixMarket => "matrix-market".into(),
                            },
                        ));
                    }
                    None => {
                        out.push(("nodes", self.nodes().to_string()));
                        out.push(("avg_degree", self.avg_degree().to_string()));
                    }
                }
                if self.experiment == Experiment::Triangles {
                    out.push(("insert_updates", self.insert_updates.to_string()));
                } else {
                    out.push(("lanczos_steps", self.lanczos_steps.to_string()));
                }
            }
            Experiment::Moments => {
                out.push(("nodes", self.nodes().to_string()));
                out.push(("perturbation", perturbation_name(self.perturbation)));
                out.push(("frob_fraction", self.frob_fraction.to_string()));
                out.push(("degree", self.degree.to_string()));
                out.push(("power_iters", self.power_iters.to_string()));
                out.push(("margin", self.margin.to_string()));
            }
        }
        out.push(("dense_limit", self.dense_limit.to_string()));
        out.push((
            "reference_multiplier",
            self.reference_multiplier.to_string(),
        ));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in ["synth", "triangles", "connectivity", "moments"] {
            assert_eq!(e.parse::<Experiment>().unwrap().name(), e);
        }
        for c in ["oracle_calls", "base_matvecs"] {
            assert_eq!(c.parse::<CountMode>().unwrap().name(), c);
        }
        for p in ["low_perturb", "high_perturb", "stationary", "lowrank_psd:7"] {
            assert_eq!(perturbation_name(parse_perturbation(p).unwrap()), p);
        }
        assert!(parse_perturbation("lowrank_psd:x").is_err());
    }

    #[test]
    fn validation() {
        let ok = ExperimentConfig::default();
        ok.validate().unwrap();
        let bad = ExperimentConfig {
            budget: 10,
            steps: 20,
            ..ok.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Budget(_))));
        let bad = ExperimentConfig {
            gamma: Some(2.0),
            ..ok
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn describe_is_stable() {
        let c = ExperimentConfig::default();
        assert_eq!(c.describe(), c.clone().describe());
        assert_eq!(c.describe()[0], ("experiment".into(), "synth".into()));
    }
}
