//! Command-line pipeline: simulate, fit, uncertainty, solve, evaluate, and
//! standalone filtering. One binary, shared seed and manifest conventions.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration, 3 data,
//! 4 convergence, 5 likelihood, 6 numerical.

use crate::eval::{self, LogisticFit};
use crate::iohmm::{self, FitConfig, IohmmError};
use crate::model::{
    self, read_params_file, read_trial_log, validate_env, validate_params, write_params_file,
    write_trial_log, Complexity, EnvConfig, ModelParams,
};
use crate::simulant::{self, ComplexityMode, EpisodeConfig, InitialTrust, RobotPolicy, SimulantError};
use crate::solver::{self, BeliefGrid, PolicyFile, SolverError};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_LIKELIHOOD: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;

/// Seed fallback when `--seed` is not given.
pub const SEED_ENV_VAR: &str = "TRUST_POMDP_SEED";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Convergence(String),
    Likelihood(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Convergence(_) => EXIT_CONVERGENCE,
            CliError::Likelihood(_) => EXIT_LIKELIHOOD,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Convergence(m)
            | CliError::Likelihood(m)
            | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<model::ModelError> for CliError {
    fn from(e: model::ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IohmmError> for CliError {
    fn from(e: IohmmError) -> Self {
        match e {
            IohmmError::ZeroLikelihood { .. } => CliError::Likelihood(e.to_string()),
            IohmmError::EmptyDataset => CliError::Data(e.to_string()),
            IohmmError::InvalidInit(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NonConvergence { .. } => CliError::Convergence(e.to_string()),
            SolverError::NoData(_) => CliError::Data(e.to_string()),
            SolverError::InvalidPolicyFile(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimulantError> for CliError {
    fn from(e: SimulantError) -> Self {
        match e {
            SimulantError::Belief(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::Simulant(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "trust-pomdp", version, about = "Trust-aware assistance-seeking toolkit")]
pub struct Cli {
    /// Bound worker parallelism; output is identical for any thread count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Simulate closed-loop episodes into a JSON-lines trial log.
    Simulate(SimulateArgs),
    /// Fit the IOHMM tables from a trial log by Baum-Welch EM.
    Fit(FitArgs),
    /// Solve the discretized belief-MDP and write the policy.
    Solve(SolveArgs),
    /// Filtered trust beliefs for every trial of a log.
    Filter(FilterArgs),
    /// Monte Carlo comparison of two assistance policies.
    Evaluate(EvaluateArgs),
    /// Laplace standard errors of fitted parameters.
    Uncertainty(UncertaintyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Parameter file (JSON, with the env sub-object).
    #[arg(long)]
    pub params: PathBuf,
    /// Optional env override (JSON object mirroring the env sub-object).
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// static:<pL>,<pH> | threshold:<policy.json> | always-auto | always-assist
    #[arg(long, default_value = "static:0.10,0.33")]
    pub policy: String,
    #[arg(long, default_value_t = 33)]
    pub episodes: usize,
    #[arg(long, default_value_t = 71)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episode configuration JSON; overrides --trials (and its own seed is
    /// used unless --seed is given).
    #[arg(long)]
    pub episode_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Trial log (JSON lines).
    #[arg(long)]
    pub log: PathBuf,
    /// Starting parameters for restart 0 (default: uniform 0.5 tables).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Env sub-object to embed in the fitted parameter file (default: the
    /// init file's env, else the reference environment).
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON path (default: <out>.diagnostics.json).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub grid_bins: usize,
    /// Discount override (default: the env sub-object's discount).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Logistic fit JSON; adds a survey-score column by inverse mapping.
    #[arg(long)]
    pub survey_map: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Policy spec for arm A (same grammar as simulate's --policy).
    #[arg(long)]
    pub policy_a: String,
    /// Policy spec for arm B.
    #[arg(long)]
    pub policy_b: String,
    #[arg(long, default_value_t = 1000)]
    pub participants: usize,
    #[arg(long, default_value_t = 40)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-participant cumulative rewards CSV (default: <out>.samples.csv).
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Finite-difference step in raw probability space.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Also emit the literal sqrt(diag(-H)) column.
    #[arg(long)]
    pub literal_formula: bool,
    /// Accept a pseudo-inverse when -H is not positive definite.
    #[arg(long)]
    pub allow_pseudo: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to reproduce a run, written alongside each primary
/// output as `<out>.manifest.json`. Timestamps and durations are the only
/// fields that vary between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub threads: Option<usize>,
    pub version: String,
    pub duration_seconds: f64,
    pub unix_timestamp: f64,
}

fn manifest_path(primary_out: &Path) -> PathBuf {
    let mut name = primary_out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

struct ManifestScope<'a> {
    command: &'a str,
    config: serde_json::Value,
    seed: Option<u64>,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl<'a> ManifestScope<'a> {
    fn new(command: &'a str, config: serde_json::Value, threads: Option<usize>) -> Self {
        ManifestScope {
            command,
            config,
            seed: None,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn write(&self) -> Result<(), CliError> {
        let Some(primary) = self.outputs.first() else {
            return Ok(());
        };
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: self.config.clone(),
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            threads: self.threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
            unix_timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        };
        let path = manifest_path(primary);
        let mut body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Config(format!("manifest serialization: {e}")))?;
        body.push('\n');
        fs::write(&path, body)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command, cli.threads))
        }
        None => dispatch(&cli.command, None),
    }
}

fn dispatch(command: &Command, threads: Option<usize>) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::Fit(args) => cmd_fit(args, threads),
        Command::Solve(args) => cmd_solve(args, threads),
        Command::Filter(args) => cmd_filter(args, threads),
        Command::Evaluate(args) => cmd_evaluate(args, threads),
        Command::Uncertainty(args) => cmd_uncertainty(args, threads),
    }
}

fn resolve_seed(explicit: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CliError::Config(format!("{SEED_ENV_VAR}={text} is not a valid seed"))),
        Err(_) => Ok(0),
    }
}

fn read_env_file(path: &Path) -> Result<EnvConfig, CliError> {
    let body = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Load a parameter file and refuse to proceed on any invariant violation.
fn load_validated(
    params_path: &Path,
    env_override: Option<&Path>,
) -> Result<(ModelParams, EnvConfig), CliError> {
    let (params, mut env) = read_params_file(params_path)?;
    if let Some(path) = env_override {
        env = read_env_file(path)?;
    }
    let mut violations = validate_params(&params);
    violations.extend(validate_env(&env));
    if !violations.is_empty() {
        let listing: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Config(format!(
            "{}: invalid parameters: {}",
            params_path.display(),
            listing.join("; ")
        )));
    }
    Ok((params, env))
}

fn parse_policy_spec(spec: &str) -> Result<RobotPolicy, CliError> {
    if spec == "always-auto" {
        return Ok(RobotPolicy::AlwaysAutonomous);
    }
    if spec == "always-assist" {
        return Ok(RobotPolicy::AlwaysAssist);
    }
    if let Some(rest) = spec.strip_prefix("static:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(CliError::Config(format!(
                "policy spec '{spec}': expected static:<pL>,<pH>"
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            let p: f64 = s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("policy spec '{spec}': bad probability '{s}'")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::Config(format!(
                    "policy spec '{spec}': probability {p} outside [0, 1]"
                )));
            }
            Ok(p)
        };
        return Ok(RobotPolicy::Static {
            assist_prob_low: parse(parts[0])?,
            assist_prob_high: parse(parts[1])?,
        });
    }
    if let Some(path) = spec.strip_prefix("threshold:") {
        let body = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        let file: PolicyFile = serde_json::from_str(&body)
            .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        return Ok(RobotPolicy::Threshold(file.into_policy()?));
    }
    Err(CliError::Config(format!(
        "unknown policy spec '{spec}' (expected static:<pL>,<pH>, threshold:<path>, always-auto, or always-assist)"
    )))
}

fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "simulate",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.params.clone());
    let (params, env) = load_validated(&args.params, args.env.as_deref())?;
    if let Some(p) = &args.env {
        scope.inputs.push(p.clone());
    }
    let policy = parse_policy_spec(&args.policy)?;

    let cfg = match &args.episode_config {
        Some(path) => {
            scope.inputs.push(path.clone());
            let body = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut cfg: EpisodeConfig = serde_json::from_str(&body)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let ComplexityMode::Fixed(schedule) = &cfg.complexity_mode {
                if schedule.len() != cfg.n_trials {
                    return Err(CliError::Config(format!(
                        "{}: fixed schedule has {} entries for {} trials",
                        path.display(),
                        schedule.len(),
                        cfg.n_trials
                    )));
                }
            }
            cfg
        }
        None => EpisodeConfig {
            n_trials: args.trials,
            complexity_mode: ComplexityMode::Iid,
            initial_trust: InitialTrust::Sample,
            seed: resolve_seed(args.seed)?,
        },
    };
    scope.seed = Some(cfg.seed);

    let episodes = simulant::simulate_dataset(&params, &env, &policy, &cfg, args.episodes)?;
    write_trial_log(&args.out, &episodes)?;
    scope.outputs.push(args.out.clone());
    scope.write()?;
    let records: usize = episodes.iter().map(Vec::len).sum();
    println!(
        "wrote {} episodes ({} records) to {} [policy {}]",
        episodes.len(),
        records,
        args.out.display(),
        policy.describe()
    );
    Ok(())
}

fn default_init() -> ModelParams {
    ModelParams::new(0.5, |_, _, _, _| 0.5, |_, _, _| 0.5).with_assist_observation_clamped()
}

fn cmd_fit(args: &FitArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "fit",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.log.clone());
    let dataset = read_trial_log(&args.log)?;

    let (init, mut out_env) = match &args.init {
        Some(path) => {
            scope.inputs.push(path.clone());
            load_validated(path, None)?
        }
        None => (default_init(), EnvConfig::reference()),
    };
    if let Some(path) = &args.env {
        scope.inputs.push(path.clone());
        out_env = read_env_file(path)?;
    }

    let seed = resolve_seed(args.seed)?;
    scope.seed = Some(seed);
    let config = FitConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        seed,
        restarts: args.restarts,
    };
    let (fitted, diagnostics) = iohmm::baum_welch_fit(&dataset, &init, &config)?;

    write_params_file(&args.out, &fitted, &out_env)?;
    let diag_path = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| manifest_sibling(&args.out, ".diagnostics.json"));
    let mut body = serde_json::to_string_pretty(&diagnostics)
        .map_err(|e| CliError::Config(format!("diagnostics serialization: {e}")))?;
    body.push('\n');
    fs::write(&diag_path, body)
        .map_err(|e| CliError::Config(format!("{}: {e}", diag_path.display())))?;
    scope.outputs.push(args.out.clone());
    scope.outputs.push(diag_path.clone());
    scope.write()?;

    println!(
        "fit: {} episodes, best restart {} of {}, log-likelihood {:.6}, {} iterations, converged: {}",
        dataset.len(),
        diagnostics.restart_index,
        diagnostics.restarts.len(),
        diagnostics.log_likelihood_trace.last().copied().unwrap_or(f64::NAN),
        diagnostics.iterations,
        diagnostics.converged
    );
    if !diagnostics.missing_contexts.is_empty() {
        return Err(CliError::Data(format!(
            "degenerate dataset: contexts never observed: {} (outputs written to {} and {})",
            diagnostics.missing_contexts.join(", "),
            args.out.display(),
            diag_path.display()
        )));
    }
    Ok(())
}

fn manifest_sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_solve(args: &SolveArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "solve",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.params.clone());
    let (params, mut env) = load_validated(&args.params, args.env.as_deref())?;
    if let Some(p) = &args.env {
        scope.inputs.push(p.clone());
    }
    if let Some(gamma) = args.gamma {
        if !(0.0..1.0).contains(&gamma) {
            return Err(CliError::Config(format!(
                "--gamma {gamma} outside [0, 1)"
            )));
        }
        env.discount = gamma;
    }
    if args.grid_bins < 2 {
        return Err(CliError::Config(format!(
            "--grid-bins {} is below the 2-bin minimum",
            args.grid_bins
        )));
    }

    let grid = BeliefGrid::uniform(args.grid_bins);
    let mdp = solver::build_belief_mdp(&params, &env, &grid);
    let policy = solver::value_iteration(&mdp, args.tol)?;

    let file = PolicyFile::new(&policy);
    let mut body = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Config(format!("policy serialization: {e}")))?;
    body.push('\n');
    fs::write(&args.out, body)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    scope.outputs.push(args.out.clone());
    scope.write()?;

    println!(
        "solved belief-MDP: {} bins, gamma {}, {} sweeps",
        args.grid_bins, env.discount, policy.sweeps
    );
    for c in Complexity::ALL {
        match policy.threshold(c) {
            Some(t) if t == 0.0 => println!("C={c}: autonomous for all beliefs"),
            Some(t) => println!("C={c}: autonomous for beliefs >= {t:.2} (threshold {t:.4})"),
            None => println!("C={c}: seek assistance for all beliefs"),
        }
    }
    Ok(())
}

fn cmd_filter(args: &FilterArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "filter",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.params.clone());
    scope.inputs.push(args.log.clone());
    let (params, _env) = load_validated(&args.params, None)?;
    let dataset = read_trial_log(&args.log)?;

    let survey_map: Option<LogisticFit> = match &args.survey_map {
        Some(path) => {
            scope.inputs.push(path.clone());
            let body = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&body)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };

    let mut writer = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    let write_err = |e: csv::Error| CliError::Config(format!("{}: {e}", args.out.display()));
    if survey_map.is_some() {
        writer
            .write_record(["episode_id", "t", "belief", "survey"])
            .map_err(write_err)?;
    } else {
        writer
            .write_record(["episode_id", "t", "belief"])
            .map_err(write_err)?;
    }
    for episode in &dataset {
        let episode_id = episode.first().map(|r| r.episode_id).unwrap_or(0);
        let trajectory = iohmm::forward_filter(&params, episode)?;
        for (t, belief) in trajectory.beliefs.iter().enumerate() {
            let mut record = vec![
                episode_id.to_string(),
                t.to_string(),
                format_float(*belief),
            ];
            if let Some(fit) = &survey_map {
                let survey = eval::belief_to_survey(fit, *belief)
                    .map(|r| format_float(r))
                    .unwrap_or_default();
                record.push(survey);
            }
            writer.write_record(&record).map_err(write_err)?;
        }
    }
    writer.flush().map_err(|e| CliError::Config(e.to_string()))?;
    scope.outputs.push(args.out.clone());
    scope.write()?;
    println!(
        "filtered {} episodes into {}",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn format_float(v: f64) -> String {
    let mut buffer = ryu_format(v);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

// serde_json's float formatting (shortest round-trip representation)
fn ryu_format(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn cmd_evaluate(args: &EvaluateArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "evaluate",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.params.clone());
    let (params, env) = load_validated(&args.params, args.env.as_deref())?;
    if let Some(p) = &args.env {
        scope.inputs.push(p.clone());
    }
    let policy_a = parse_policy_spec(&args.policy_a)?;
    let policy_b = parse_policy_spec(&args.policy_b)?;
    let seed = resolve_seed(args.seed)?;
    scope.seed = Some(seed);

    let report = eval::monte_carlo_compare(
        &params,
        &env,
        &policy_a,
        &policy_b,
        args.participants,
        args.trials,
        seed,
    )?;

    let mut body = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Config(format!("report serialization: {e}")))?;
    body.push('\n');
    fs::write(&args.out, body)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;

    let samples_path = args
        .samples
        .clone()
        .unwrap_or_else(|| manifest_sibling(&args.out, ".samples.csv"));
    let mut writer = csv::Writer::from_path(&samples_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", samples_path.display())))?;
    let write_err = |e: csv::Error| CliError::Config(format!("{}: {e}", samples_path.display()));
    writer
        .write_record(["participant", "policy", "cumulative_reward"])
        .map_err(write_err)?;
    for (i, reward) in report.samples_a.iter().enumerate() {
        writer
            .write_record(&[i.to_string(), "a".to_string(), format_float(*reward)])
            .map_err(write_err)?;
    }
    for (i, reward) in report.samples_b.iter().enumerate() {
        writer
            .write_record(&[i.to_string(), "b".to_string(), format_float(*reward)])
            .map_err(write_err)?;
    }
    writer.flush().map_err(|e| CliError::Config(e.to_string()))?;

    scope.outputs.push(args.out.clone());
    scope.outputs.push(samples_path);
    scope.write()?;

    println!(
        "A [{}]: median {:.2}, mean {:.3}",
        report.policy_a, report.median_a, report.mean_a
    );
    println!(
        "B [{}]: median {:.2}, mean {:.3}",
        report.policy_b, report.median_b, report.mean_b
    );
    println!("t = {:.4}, p = {:.6}", report.t, report.p);
    Ok(())
}

fn cmd_uncertainty(args: &UncertaintyArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut scope = ManifestScope::new(
        "uncertainty",
        serde_json::to_value(args).expect("args serialize"),
        threads,
    );
    scope.inputs.push(args.params.clone());
    scope.inputs.push(args.log.clone());
    let (params, _env) = load_validated(&args.params, None)?;
    let dataset = read_trial_log(&args.log)?;
    if args.step <= 0.0 || args.step >= 0.25 {
        return Err(CliError::Config(format!(
            "--step {} outside the sensible range (0, 0.25)",
            args.step
        )));
    }

    let report = iohmm::laplace_uncertainty(&params, &dataset, args.step)?;
    if report.used_pseudo_inverse && !args.allow_pseudo {
        return Err(CliError::Numerical(
            "-H is not positive definite at these parameters; re-run with --allow-pseudo to accept pseudo-inverse standard errors"
                .to_string(),
        ));
    }

    let mut writer = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.out.display())))?;
    let write_err = |e: csv::Error| CliError::Config(format!("{}: {e}", args.out.display()));
    let mut header = vec![
        "parameter",
        "estimate",
        "std_error",
        "identifiable",
        "boundary",
        "context_count",
    ];
    if args.literal_formula {
        header.push("literal_std_error");
    }
    writer.write_record(&header).map_err(write_err)?;
    for row in &report.params {
        let mut record = vec![
            row.name.clone(),
            format_float(row.estimate),
            row.std_error.map(format_float).unwrap_or_default(),
            row.identifiable.to_string(),
            row.boundary.to_string(),
            row.context_count.to_string(),
        ];
        if args.literal_formula {
            record.push(row.literal_std_error.map(format_float).unwrap_or_default());
        }
        writer.write_record(&record).map_err(write_err)?;
    }
    writer.flush().map_err(|e| CliError::Config(e.to_string()))?;
    scope.outputs.push(args.out.clone());
    scope.write()?;

    let identifiable = report.params.iter().filter(|p| p.identifiable).count();
    println!(
        "uncertainty: {} of {} parameters identifiable, step {}{}",
        identifiable,
        report.params.len(),
        report.step,
        if report.used_pseudo_inverse {
            " (pseudo-inverse)"
        } else {
            ""
        }
    );
    Ok(())
}
