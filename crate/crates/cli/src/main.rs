use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dyntrace::dyngraph::EdgeListFormat;
use dyntrace::estimators::{EstimatorKind, GammaProbes};
use dyntrace::harness::{
    parse_perturbation, records_to_csv, run_experiment, run_sweep, summary_to_csv, CountMode,
    Experiment, ExperimentConfig, SweepConfig,
};
use dyntrace::synth::PerturbationKind;

#[derive(Parser)]
#[command(
    name = "dyntrace",
    version,
    about = "Dynamic trace estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic symmetric matrix sequence.
    Synth(RunArgs),
    /// tr(B^3) under clique insertions and deletions.
    Triangles(RunArgs),
    /// tr(exp(B)) under random edge insertions.
    Connectivity(RunArgs),
    /// tr(T_q(H)) of a slowly perturbed symmetric operator.
    Moments(MomentsArgs),
    /// Grid over budgets, seeds and estimators; writes a summary CSV.
    Sweep(SweepArgs),
}

fn perturbation_arg(s: &str) -> Result<PerturbationKind, String> {
    parse_perturbation(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    estimator: Option<EstimatorKind>,
    /// Total matvec budget Q.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the matrix or graph sequence (defaults to --seed).
    #[arg(long)]
    sequence_seed: Option<u64>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    ell0: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    restart_every: Option<usize>,
    #[arg(long)]
    first_fraction: Option<f64>,
    /// Share one sketch between the two DeltaShift++ Hutch++ calls.
    #[arg(long)]
    reuse_sketch: bool,
    /// Measure the adaptive gamma statistics on the trace probes instead of
    /// held-out ones (biased).
    #[arg(long)]
    shared_gamma_probes: bool,
    /// oracle_calls or base_matvecs.
    #[arg(long)]
    count_mode: Option<CountMode>,
    #[arg(long)]
    nodes: Option<usize>,
    /// low_perturb, high_perturb, stationary or lowrank_psd:K.
    #[arg(long, value_parser = perturbation_arg)]
    perturbation: Option<PerturbationKind>,
    #[arg(long)]
    frob_fraction: Option<f64>,
    /// Edge list; a random graph is generated when absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// snap or matrix-market.
    #[arg(long)]
    format: Option<EdgeListFormat>,
    #[arg(long)]
    avg_degree: Option<f64>,
    #[arg(long)]
    insert_updates: Option<usize>,
    #[arg(long)]
    lanczos_steps: Option<usize>,
    #[arg(long)]
    power_iters: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    dense_limit: Option<usize>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated Chebyshev degrees; one output file per degree.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
    degrees: Vec<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "synth")]
    experiment: Experiment,
    #[arg(long, value_delimiter = ',', required = true)]
    budgets: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64])]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [EstimatorKind::Hutchinson, EstimatorKind::DeltashiftAuto])]
    estimators: Vec<EstimatorKind>,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn build_config(experiment: Experiment, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    c.experiment = experiment;
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                c.$field = v;
            }
        )*};
    }
    set!(
        estimator,
        budget,
        steps,
        seed,
        restart_every,
        first_fraction,
        count_mode,
        perturbation,
        frob_fraction,
        format,
        insert_updates,
        lanczos_steps,
        power_iters,
        margin,
        dense_limit
    );
    macro_rules! set_opt {
        ($($field:ident),*) => {$(
            if args.$field.is_some() {
                c.$field = args.$field.clone();
            }
        )*};
    }
    set_opt!(
        sequence_seed,
        ell,
        ell0,
        gamma,
        nodes,
        graph,
        avg_degree,
        out
    );
    if args.reuse_sketch {
        c.reuse_sketch = true;
    }
    if args.shared_gamma_probes {
        c.gamma_probes = GammaProbes::Shared;
    }
    Ok(c)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn run_single(config: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(config)?;
    emit(
        config.out.as_deref(),
        &records_to_csv(&out.records, &out.header_lines()),
    )
}

/// `dir/name.csv` -> `dir/name_T3.csv`.
fn degree_path(path: &Path, degree: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_T{degree}.{}", ext.to_string_lossy()),
        None => format!("{stem}_T{degree}"),
    };
    path.with_file_name(name)
}

fn run_moments(args: &MomentsArgs) -> Result<()> {
    let base = build_config(Experiment::Moments, &args.run)?;
    if args.degrees.is_empty() {
        bail!("at least one degree required");
    }
    if args.degrees.len() > 1 && base.out.is_none() {
        bail!("--out is required when tracking more than one degree");
    }
    for &degree in &args.degrees {
        let mut c = base.clone();
        c.degree = degree;
        if args.degrees.len() > 1 {
            c.out = base.out.as_deref().map(|p| degree_path(p, degree));
        }
        run_single(&c)?;
    }
    Ok(())
}

fn run_sweep_cmd(args: &SweepArgs) -> Result<()> {
    let base = build_config(args.experiment, &args.run)?;
    let sweep = SweepConfig {
        base: base.clone(),
        budgets: args.budgets.clone(),
        seeds: args.seeds.clone(),
        estimators: args.estimators.clone(),
    };
    let rows = run_sweep(&sweep)?;
    let join = |v: Vec<String>| v.join(";");
    let mut comments: Vec<String> = base
        .describe()
        .into_iter()
        .filter(|(k, _)| !matches!(k.as_str(), "budget" | "estimator" | "seed"))
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    comments.push(format!(
        "budgets={}",
        join(args.budgets.iter().map(u64::to_string).collect())
    ));
    comments.push(format!(
        "seeds={}",
        join(args.seeds.iter().map(u64::to_string).collect())
    ));
    comments.push(format!(
        "estimators={}",
        join(args.estimators.iter().map(|e| e.to_string()).collect())
    ));
    emit(base.out.as_deref(), &summary_to_csv(&rows, &comments))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_single(&build_config(Experiment::Synth, a)?),
        Command::Triangles(a) => run_single(&build_config(Experiment::Triangles, a)?),
        Command::Connectivity(a) => run_single(&build_config(Experiment::Connectivity, a)?),
        Command::Moments(a) => run_moments(a),
        Command::Sweep(a) => run_sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
