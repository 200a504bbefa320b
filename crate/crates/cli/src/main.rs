//! Command-line front end for merit-aware selection: synthetic cohort
//! generation, outcome-model fitting, policy optimization, stability audits,
//! contribution exports, the two-candidate utility landscape, and the
//! end-to-end algorithm-comparison experiment.
//!
//! Every command is deterministic given `--seed`; re-running a command
//! overwrites its outputs identically. Exit codes: 0 on success, 2 for
//! configuration or input errors, 3 when an exact computation exceeds the
//! enumeration capacity, 4 when an optimization run diverges.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use meritsel_core::contribution::{emc_exact, emc_sampled, shapley_exact, ContributionVector};
use meritsel_core::experiment::{run_experiment, ExperimentConfig, ExperimentResult};
use meritsel_core::fairness::{GroupPair, ParityConstraint};
use meritsel_core::landscape::{self, LandscapeConfig};
use meritsel_core::meritocracy::{audit, audit_sampled, AuditReport};
use meritsel_core::optimize::{
    constrained_policy_gradient, policy_gradient, MultiplierMode, OptimizerConfig, TrainTrace,
};
use meritsel_core::outcome::LinearOutcomeModel;
use meritsel_core::simdata::{
    fit_outcome_model, generate_population, generate_true_outcomes, GeneratorConfig,
};
use meritsel_core::utility::TabularUtility;
use meritsel_core::{
    Error, ExpectedUtilityOracle, OutcomeMatrix, OutcomeModel, Policy, Population, Result,
    UtilityFunction,
};

#[derive(Parser, Debug)]
#[command(
    name = "meritsel",
    version,
    about = "Stochastic set-selection policies: training, merit audits, and experiments"
)]
struct Cli {
    /// Master random seed shared by every stochastic step of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Primary output path; each command falls back to a fixed file name in
    /// the working directory (or stdout where noted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// JSON configuration file overriding the command's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic cohort CSV (and optionally its realized outcomes).
    Gen(GenArgs),
    /// Fit a linear outcome model to a population/outcome pair.
    Fit(FitArgs),
    /// Train a selection policy by gradient ascent.
    Optimize(OptimizeArgs),
    /// Audit a policy for swap and local stability.
    Audit(AuditArgs),
    /// Export each candidate's expected marginal contribution.
    Emc(EmcArgs),
    /// Export exact Shapley values.
    Shapley(ShapleyArgs),
    /// Export the two-candidate utility/contribution/gradient grid.
    Landscape(LandscapeArgs),
    /// Run the full algorithm-comparison experiment.
    Experiment(ExperimentArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum UtilityKind {
    /// Diminishing-returns utility over outcome column totals.
    #[value(name = "log_linear")]
    LogLinear,
    /// Modular utility: mean outcomes minus cost.
    #[value(name = "linear")]
    Linear,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FamilyKind {
    /// Independent per-candidate marginals.
    #[value(name = "separable_linear")]
    SeparableLinear,
    /// Sigmoid-squashed per-candidate scores.
    #[value(name = "softmax")]
    Softmax,
    /// Logistic threshold on feature vectors.
    #[value(name = "threshold")]
    Threshold,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MultiplierKind {
    /// Nonnegative multiplier, penalizing constraint violation.
    #[value(name = "conventional")]
    Conventional,
    /// Literal transcription with a nonpositive multiplier.
    #[value(name = "nonpositive_literal")]
    NonpositiveLiteral,
}

impl From<MultiplierKind> for MultiplierMode {
    fn from(kind: MultiplierKind) -> Self {
        match kind {
            MultiplierKind::Conventional => MultiplierMode::Conventional,
            MultiplierKind::NonpositiveLiteral => MultiplierMode::NonpositiveLiteral,
        }
    }
}

/// Inputs shared by every command that evaluates expected utilities:
/// either an explicit subset-utility table, or a population plus an outcome
/// source (realized matrix or fitted model) under a parametric utility.
#[derive(Args, Debug)]
struct OracleArgs {
    /// Population CSV (`id,group,f1,..,fd`).
    #[arg(long)]
    population: Option<PathBuf>,

    /// Realized outcome matrix CSV; mutually exclusive with --model.
    #[arg(long)]
    outcomes: Option<PathBuf>,

    /// Fitted linear outcome model JSON; mutually exclusive with --outcomes.
    #[arg(long)]
    model: Option<PathBuf>,

    /// Explicit subset-utility table CSV (`mask,value`); outcome and utility
    /// flags are ignored when given.
    #[arg(long)]
    table: Option<PathBuf>,

    /// Utility family applied to the outcomes.
    #[arg(long, value_enum, default_value_t = UtilityKind::LogLinear)]
    utility: UtilityKind,

    /// Per-selection cost of the utility.
    #[arg(long, default_value_t = 0.05)]
    cost: f64,
}

impl OracleArgs {
    fn build(&self) -> Result<(Population, ExpectedUtilityOracle)> {
        if let Some(table_path) = &self.table {
            let table = TabularUtility::read_csv(table_path)?;
            let n = table.n();
            let pop = match &self.population {
                Some(p) => Population::read_csv(p)?,
                None => placeholder_population(n)?,
            };
            if pop.len() != n {
                return Err(Error::Dimension(format!(
                    "table covers {n} candidates but the population has {}",
                    pop.len()
                )));
            }
            return Ok((pop, ExpectedUtilityOracle::tabular(table)));
        }

        let pop_path = self.population.as_ref().ok_or_else(|| {
            Error::Argument("either --table or --population is required".into())
        })?;
        let pop = Population::read_csv(pop_path)?;
        let model = match (&self.model, &self.outcomes) {
            (Some(_), Some(_)) => {
                return Err(Error::Argument(
                    "--model and --outcomes are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => {
                let parsed: LinearOutcomeModel = serde_json::from_str(&read_text(path)?)?;
                OutcomeModel::Linear(parsed)
            }
            (None, Some(path)) => OutcomeModel::Table(OutcomeMatrix::read_csv(path)?),
            (None, None) => {
                return Err(Error::Argument(
                    "an outcome source is required: --outcomes, --model, or --table".into(),
                ))
            }
        };
        let utility = match self.utility {
            UtilityKind::LogLinear => UtilityFunction::log_linear(self.cost),
            UtilityKind::Linear => UtilityFunction::Linear { cost: self.cost },
        };
        let oracle = ExpectedUtilityOracle::new(utility, model, &pop)?;
        Ok((pop, oracle))
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Cohort size; overrides the configured value.
    #[arg(long)]
    n: Option<usize>,

    /// Also write the realized outcome matrix CSV to this path.
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Population CSV.
    #[arg(long)]
    population: PathBuf,

    /// Outcome matrix CSV aligned with the population rows.
    #[arg(long)]
    outcomes: PathBuf,

    /// Comma-separated training row indices; all rows when omitted.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    oracle: OracleArgs,

    /// Policy family to train.
    #[arg(long, value_enum, default_value_t = FamilyKind::SeparableLinear)]
    family: FamilyKind,

    /// Inverse temperature of the softmax family.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,

    /// Initial learning rate.
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,

    /// Maximum ascent iterations.
    #[arg(long, default_value_t = 250)]
    max_iters: usize,

    /// Stop once the parameter step norm falls below this threshold.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,

    /// Sample count per sampled gradient/utility estimate.
    #[arg(long, default_value_t = 40)]
    mc_samples: usize,

    /// Evaluate gradients and utilities exactly (small populations only).
    #[arg(long)]
    exact: bool,

    /// Train under the statistical-parity constraint.
    #[arg(long)]
    constrained: bool,

    /// Parity tolerance of the constrained run.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,

    /// Dual-update convention for constrained runs.
    #[arg(long, value_enum, default_value_t = MultiplierKind::Conventional)]
    multiplier_mode: MultiplierKind,

    /// Also write the per-iteration training trace CSV to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    oracle: OracleArgs,

    /// Policy JSON to audit; the uniform policy when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,

    /// Label recorded in the report.
    #[arg(long, default_value = "policy")]
    id: String,

    /// Violations below this threshold are treated as zero.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,

    /// Monte Carlo draws for sampled audits of large stochastic policies.
    #[arg(long, default_value_t = 256)]
    samples: usize,

    /// Force the exhaustive audit regardless of population size.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug)]
struct EmcArgs {
    #[command(flatten)]
    oracle: OracleArgs,

    /// Policy JSON; the uniform policy when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,

    /// Monte Carlo sample count; exact enumeration when omitted.
    #[arg(long)]
    mc: Option<usize>,
}

#[derive(Args, Debug)]
struct ShapleyArgs {
    #[command(flatten)]
    oracle: OracleArgs,
}

#[derive(Args, Debug)]
struct LandscapeArgs {
    /// Grid step along each marginal axis.
    #[arg(long, default_value_t = 0.05)]
    step: f64,

    /// Per-selection cost of the log-linear utility.
    #[arg(long, default_value_t = 0.3)]
    cost: f64,

    /// First candidate's outcome value.
    #[arg(long, default_value_t = 0.9)]
    y1: f64,

    /// Second candidate's outcome value.
    #[arg(long, default_value_t = 0.8)]
    y2: f64,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Cohort size per repeat.
    #[arg(long)]
    n: Option<usize>,

    /// Number of independently seeded repeats.
    #[arg(long)]
    repeats: Option<usize>,

    /// Per-selection cost of the utility.
    #[arg(long)]
    cost: Option<f64>,

    /// Parity tolerance of the constrained arm.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Train every algorithm under the parity constraint.
    #[arg(long)]
    constrained: bool,

    /// Monte Carlo draws per sampled audit.
    #[arg(long)]
    audit_samples: Option<usize>,

    /// Fraction of the cohort admitted by the replayed legacy round.
    #[arg(long)]
    admit_fraction: Option<f64>,

    /// Per-run record CSV path.
    #[arg(long)]
    runs: Option<PathBuf>,
}

/// Optional JSON overrides for the experiment command.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ExperimentOverrides {
    n_applicants: Option<usize>,
    repeats: Option<usize>,
    cost: Option<f64>,
    epsilon: Option<f64>,
    constrained: Option<bool>,
    audit_samples: Option<usize>,
    admit_fraction: Option<f64>,
    generator: Option<GeneratorConfig>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::Capacity(_) => 3u8,
                Error::Divergence { .. } => 4u8,
                _ => 2u8,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(cli, args),
        Cmd::Fit(args) => cmd_fit(cli, args),
        Cmd::Optimize(args) => cmd_optimize(cli, args),
        Cmd::Audit(args) => cmd_audit(cli, args),
        Cmd::Emc(args) => cmd_emc(cli, args),
        Cmd::Shapley(args) => cmd_shapley(cli, args),
        Cmd::Landscape(args) => cmd_landscape(cli, args),
        Cmd::Experiment(args) => cmd_experiment(cli, args),
    }
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let mut cfg: GeneratorConfig = load_config(cli)?.unwrap_or_default();
    if let Some(n) = args.n {
        cfg.n = n;
    }
    let pop = generate_population(&cfg, cli.seed)?;
    let out = out_path(cli, "population.csv");
    pop.write_csv(&out)?;
    note_written(&out);
    if let Some(y_path) = &args.outcomes {
        let y = generate_true_outcomes(&cfg, &pop, cli.seed)?;
        y.write_csv(pop.ids(), y_path)?;
        note_written(y_path);
    }
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let pop = Population::read_csv(&args.population)?;
    let y = OutcomeMatrix::read_csv(&args.outcomes)?;
    let rows = if args.rows.is_empty() { None } else { Some(args.rows.as_slice()) };
    let model = fit_outcome_model(&pop, &y, rows)?;

    let pred = OutcomeModel::Linear(model.clone()).predict(&pop)?;
    let train: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..pop.len()).collect(),
    };
    let fit_mse: Vec<f64> = (0..y.cols())
        .map(|j| {
            train.iter().map(|&i| (pred.get(i, j) - y.get(i, j)).powi(2)).sum::<f64>()
                / train.len() as f64
        })
        .collect();

    let mut doc = serde_json::to_value(&model)?;
    doc.as_object_mut()
        .expect("model serializes to an object")
        .insert("fit_mse".into(), serde_json::to_value(&fit_mse)?);
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    emit_text(cli, "model.json", &text)
}

fn cmd_optimize(cli: &Cli, args: &OptimizeArgs) -> Result<()> {
    let (pop, oracle) = args.oracle.build()?;
    let n = oracle.n();
    let pi0 = match args.family {
        FamilyKind::SeparableLinear => Policy::uniform(n),
        FamilyKind::Softmax => Policy::softmax(vec![0.0; n], args.beta)?,
        FamilyKind::Threshold => Policy::logistic_threshold(vec![0.0; pop.dim()])?,
    };
    let cfg = OptimizerConfig {
        eta0: args.eta0,
        max_iters: args.max_iters,
        delta: args.delta,
        mc_samples: args.mc_samples,
        seed: cli.seed,
        exact_gradient: args.exact,
        multiplier_mode: args.multiplier_mode.into(),
        ..OptimizerConfig::default()
    };

    let (policy, trace): (Policy, TrainTrace) = if args.constrained {
        let groups = GroupPair::from_population(&pop)?;
        let constraint = ParityConstraint::new(args.epsilon, groups)?;
        constrained_policy_gradient(&oracle, &pi0, &pop, &constraint, &cfg)?
    } else {
        policy_gradient(&oracle, &pi0, &pop, &cfg)?
    };

    if let Some(trace_path) = &args.trace {
        trace.write_csv(trace_path)?;
        note_written(trace_path);
    }
    let last = trace.steps.last();
    eprintln!(
        "iterations: {}; final objective: {}; converged: {}{}",
        trace.steps.len(),
        last.map_or(f64::NAN, |s| s.utility),
        trace.converged,
        match trace.feasible {
            None => String::new(),
            Some(f) => format!("; feasible: {f}"),
        }
    );
    emit_text(cli, "policy.json", &(policy.to_json()? + "\n"))
}

fn cmd_audit(cli: &Cli, args: &AuditArgs) -> Result<()> {
    let (pop, oracle) = args.oracle.build()?;
    let policy = load_policy(&args.policy, oracle.n())?;
    let exact = args.exact || matches!(policy, Policy::Deterministic(_)) || oracle.n() <= 16;
    let report: AuditReport = if exact {
        audit(&oracle, &policy, &pop, &args.id, args.tol)?
    } else {
        audit_sampled(&oracle, &policy, &pop, &args.id, args.tol, args.samples, cli.seed)?
    };
    let text = report.to_json()? + "\n";
    print!("{text}");
    if let Some(out) = &cli.out {
        write_text(out, &text)?;
        note_written(out);
    }
    Ok(())
}

fn cmd_emc(cli: &Cli, args: &EmcArgs) -> Result<()> {
    let (pop, oracle) = args.oracle.build()?;
    let policy = load_policy(&args.policy, oracle.n())?;
    let contrib: ContributionVector = match args.mc {
        None => emc_exact(&oracle, &policy, &pop)?,
        Some(samples) => emc_sampled(&oracle, &policy, &pop, samples, cli.seed)?,
    };
    let out = out_path(cli, "emc.csv");
    contrib.write_csv(pop.ids(), &out)?;
    note_written(&out);
    Ok(())
}

fn cmd_shapley(cli: &Cli, args: &ShapleyArgs) -> Result<()> {
    let (pop, oracle) = args.oracle.build()?;
    let contrib = shapley_exact(&oracle)?;
    let out = out_path(cli, "shapley.csv");
    contrib.write_csv(pop.ids(), &out)?;
    note_written(&out);
    Ok(())
}

fn cmd_landscape(cli: &Cli, args: &LandscapeArgs) -> Result<()> {
    let cfg = LandscapeConfig {
        outcomes: OutcomeMatrix::from_rows(vec![vec![args.y1], vec![args.y2]])?,
        cost: args.cost,
        step: args.step,
    };
    let rows = landscape::landscape_grid(&cfg)?;
    let out = out_path(cli, "landscape.csv");
    landscape::write_csv(&rows, &out)?;
    note_written(&out);
    Ok(())
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(over) = load_config::<ExperimentOverrides>(cli)? {
        apply(&mut cfg.n_applicants, over.n_applicants);
        apply(&mut cfg.repeats, over.repeats);
        apply(&mut cfg.cost, over.cost);
        apply(&mut cfg.epsilon, over.epsilon);
        apply(&mut cfg.constrained, over.constrained);
        apply(&mut cfg.audit_samples, over.audit_samples);
        apply(&mut cfg.admit_fraction, over.admit_fraction);
        if let Some(generator) = over.generator {
            cfg.generator = generator;
        }
    }
    apply(&mut cfg.n_applicants, args.n);
    apply(&mut cfg.repeats, args.repeats);
    apply(&mut cfg.cost, args.cost);
    apply(&mut cfg.epsilon, args.epsilon);
    apply(&mut cfg.audit_samples, args.audit_samples);
    apply(&mut cfg.admit_fraction, args.admit_fraction);
    if args.constrained {
        cfg.constrained = true;
    }

    let result = run_experiment(&cfg, cli.seed)?;

    let summary = result.summary_csv();
    let out = out_path(cli, "summary.csv");
    write_text(&out, &summary)?;
    note_written(&out);
    print!("{summary}");

    let runs_path = args.runs.clone().unwrap_or_else(|| sibling(&out, "runs.csv"));
    write_text(&runs_path, &runs_csv(&result))?;
    note_written(&runs_path);
    Ok(())
}

/// Per-run records as CSV, one row per (repeat, algorithm, outcome basis).
fn runs_csv(result: &ExperimentResult) -> String {
    let mut text =
        String::from("repeat,algorithm,constrained,outcome_basis,utility,dev_swap,dev_local,error\n");
    for r in &result.runs {
        let error = r.error.as_deref().unwrap_or("");
        text.push_str(&format!(
            "{},{},{},{},{},{},{},\"{}\"\n",
            r.repeat,
            r.algorithm,
            r.constrained,
            r.outcome_basis,
            r.utility,
            r.dev_swap,
            r.dev_local,
            error.replace('"', "\"\"")
        ));
    }
    text
}

/// Anonymous population used when only a subset-utility table is given:
/// sequential ids, alternating group labels, no features.
fn placeholder_population(n: usize) -> Result<Population> {
    let ids = (0..n).map(|i| format!("c{i}")).collect();
    let groups = (0..n).map(|i| if i % 2 == 0 { "m".into() } else { "f".into() }).collect();
    Population::new(ids, groups, vec![Vec::new(); n])
}

fn load_policy(path: &Option<PathBuf>, n: usize) -> Result<Policy> {
    match path {
        Some(p) => Policy::from_json(&read_text(p)?),
        None => Ok(Policy::uniform(n)),
    }
}

/// Parse the global `--config` JSON file, if one was given.
fn load_config<T: for<'de> Deserialize<'de>>(cli: &Cli) -> Result<Option<T>> {
    match &cli.config {
        None => Ok(None),
        Some(path) => Ok(Some(serde_json::from_str(&read_text(path)?)?)),
    }
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn out_path(cli: &Cli, default_name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default_name))
}

/// A path next to `anchor` with the given file name.
fn sibling(anchor: &Path, name: &str) -> PathBuf {
    anchor.parent().map_or_else(|| PathBuf::from(name), |dir| dir.join(name))
}

/// Write to `--out` when given, otherwise print to stdout.
fn emit_text(cli: &Cli, default_name: &str, text: &str) -> Result<()> {
    match &cli.out {
        Some(_) => {
            let out = out_path(cli, default_name);
            write_text(&out, text)?;
            note_written(&out);
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn note_written(path: &Path) {
    eprintln!("wrote {}", path.display());
}
