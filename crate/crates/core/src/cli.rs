//! Command-line workflows: train, eval, diagnose and ablate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diagnostics::{
    adversarial_csv, adversarial_eval, dynamics_consistency_error, lipschitz_suite, sandwich_suite, wasserstein_suite, Check, CheckStatus,
    DiagnosticReport, SandwichConfig, DEFAULT_INJECTION_RATIO,
};
use crate::envs::{Env, EnvId};
use crate::error::{Error, Result};
use crate::trainer::{evaluate, mean_std, stream_rng, train, Agent, EvalSummary, Stream, TrainConfig};
use crate::world_model::Transition;

/// Environment variable overriding the default output root.
pub const OUT_ENV: &str = "FLEXPLORE_OUT";
pub const DEFAULT_OUT: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_DIAGNOSTIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "flexplore", version, about = "Model-based RL for parameterized-action MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train one run per seed and write metrics, checkpoints and a manifest.
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Run a diagnostic suite and write a JSON report.
    Diagnose(DiagnoseArgs),
    /// Train the full method and a set of ablations side by side.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Environment name, used when no config file is given.
    #[arg(long)]
    pub env: Option<String>,
    /// `key=value` override, repeatable; dotted keys reach nested tables.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shorthand for `--set total_env_steps=N`.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// A count `N` (seeds `seed..seed+N`) or a comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory; defaults to `$FLEXPLORE_OUT/<run id>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated ablation flags.
    #[arg(long)]
    pub ablate: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Variants to compare; `none` is the full method.
    #[arg(long, default_value = "none,no_smoothing,always_smoothing,no_mi")]
    pub variants: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Wasserstein,
    Sandwich,
    Lipschitz,
    Consistency,
    Adversarial,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// JSON report path; defaults to `$FLEXPLORE_OUT/diagnose_<suite>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances for the oracle suites.
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    /// Randomized kernels for the sandwich suite.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Critic ascent steps for the sandwich and Lipschitz suites.
    #[arg(long, default_value_t = 500)]
    pub critic_steps: usize,
    /// Comma-separated injection strengths.
    #[arg(long, default_value = "0,0.1,0.2,0.3")]
    pub strengths: String,
    /// Trained checkpoint for the consistency suite.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long)]
    pub seeds: Option<String>,
}

/// Written to the run directory before training starts and rewritten
/// with the produced files when it ends.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub version: String,
    pub created_unix: u64,
    pub config: TrainConfig,
    pub ablations: Vec<&'static str>,
    pub seeds: Vec<u64>,
    /// Per-seed directories, relative to the run directory.
    pub layout: Vec<String>,
    pub files: Vec<PathBuf>,
    pub complete: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub eval: EvalSummary,
    pub consistency_error: f64,
    pub first_flagged_step: Option<u64>,
    pub updates: u64,
    pub skipped_updates: u64,
    pub injected: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seeds: Vec<SeedResult>,
    /// Mean and std of the per-seed evaluation means.
    pub eval_mean: f64,
    pub eval_std: f64,
    pub consistency_mean: f64,
    pub consistency_std: f64,
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) | Error::Shape { .. } | Error::Checkpoint(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn version_string() -> String {
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match described {
        Some(d) => format!("{}-{d}", env!("CARGO_PKG_VERSION")),
        None => format!("{}-unknown", env!("CARGO_PKG_VERSION")),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Builds the config from a file or an env name, applying overrides.
pub fn load_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut overrides = args.overrides.clone();
    if let Some(steps) = args.steps {
        overrides.push(format!("total_env_steps={steps}"));
    }
    let text = match (&args.config, &args.env) {
        (Some(path), env) => {
            let mut text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            if let Some(env) = env {
                overrides.push(format!("env=\"{}\"", env.parse::<EnvId>()?));
                text.push('\n');
            }
            text
        }
        (None, Some(env)) => format!("env = \"{}\"\n", env.parse::<EnvId>()?),
        (None, None) => return Err(Error::Config("either --config or --env is required".into())),
    };
    TrainConfig::from_toml_with_overrides(&text, &overrides)
}

/// `"4"` means four consecutive seeds from `base`; `"1,5,9"` is explicit.
pub fn parse_seeds(spec: Option<&str>, base: u64) -> Result<Vec<u64>> {
    let Some(spec) = spec else { return Ok(vec![base]) };
    let spec = spec.trim();
    if !spec.contains(',') {
        let n: u64 = spec.parse().map_err(|_| Error::Config(format!("invalid --seeds {spec:?}")))?;
        if n == 0 {
            return Err(Error::Config("--seeds must be at least 1".into()));
        }
        return Ok((base..base + n).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("invalid seed {s:?}"))))
        .collect()
}

pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("invalid number {s:?}"))))
        .collect()
}

fn apply_ablations(cfg: &mut TrainConfig, list: &str) -> Result<()> {
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        cfg.ablations.set(name)?;
    }
    cfg.validate()
}

/// Refuses to reuse a non-empty directory unless `force`.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !force {
            return Err(Error::Config(format!("{} exists; pass --force to overwrite", dir.display())));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn prepare_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parameter(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn run_id(cfg: &TrainConfig, label: &str) -> String {
    let env = cfg.env.to_string().replace(':', "");
    format!("{env}-{label}-{}", unix_now())
}

/// Trains every seed of `cfg` under `dir`, writing the manifest first.
pub fn run_seeds(cfg: &TrainConfig, seeds: &[u64], dir: &Path, run_id: &str) -> Result<RunSummary> {
    let layout: Vec<String> = seeds.iter().map(|s| format!("seed_{s}")).collect();
    let mut manifest = RunManifest {
        run_id: run_id.to_string(),
        version: version_string(),
        created_unix: unix_now(),
        config: cfg.clone(),
        ablations: cfg.ablations.active(),
        seeds: seeds.to_vec(),
        layout: layout.clone(),
        files: Vec::new(),
        complete: false,
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    manifest.files.push(manifest_path.clone());

    let mut results = Vec::with_capacity(seeds.len());
    for (&seed, sub) in seeds.iter().zip(&layout) {
        let mut run = cfg.clone();
        run.seed = seed;
        info!("training {} seed {seed}", run.env);
        let out = train(&run, Some(&dir.join(sub)))?;
        info!("seed {seed}: eval {:.3} ± {:.3}", out.eval.mean, out.eval.std);
        manifest.files.extend(out.files.iter().cloned());
        results.push(SeedResult {
            seed,
            eval: out.eval,
            consistency_error: out.consistency_error,
            first_flagged_step: out.first_flagged_step,
            updates: out.updates,
            skipped_updates: out.skipped_updates,
            injected: out.injected,
        });
    }
    let means: Vec<f64> = results.iter().map(|r| r.eval.mean).collect();
    let cons: Vec<f64> = results.iter().map(|r| r.consistency_error).collect();
    let (eval_mean, eval_std) = mean_std(&means);
    let (consistency_mean, consistency_std) = mean_std(&cons);
    let summary = RunSummary {
        run_id: run_id.to_string(),
        seeds: results,
        eval_mean,
        eval_std,
        consistency_mean,
        consistency_std,
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    manifest.files.push(summary_path);
    manifest.complete = true;
    write_json(&manifest_path, &manifest)?;
    Ok(summary)
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let mut cfg = load_config(&args.run.config)?;
    if let Some(list) = &args.ablate {
        apply_ablations(&mut cfg, list)?;
    }
    let seeds = parse_seeds(args.run.seeds.as_deref(), cfg.seed)?;
    let id = run_id(&cfg, "train");
    let dir = args.run.out.clone().unwrap_or_else(|| out_root().join(&id));
    prepare_dir(&dir, args.run.force)?;
    let s = run_seeds(&cfg, &seeds, &dir, &id)?;
    println!(
        "{}: eval return {:.4} ± {:.4} over {} seed(s); consistency {:.4} ± {:.4}; artifacts in {}",
        cfg.env,
        s.eval_mean,
        s.eval_std,
        s.seeds.len(),
        s.consistency_mean,
        s.consistency_std,
        dir.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<i32> {
    let base = load_config(&args.run.config)?;
    let seeds = parse_seeds(args.run.seeds.as_deref(), base.seed)?;
    let id = run_id(&base, "ablate");
    let dir = args.run.out.clone().unwrap_or_else(|| out_root().join(&id));
    prepare_dir(&dir, args.run.force)?;
    let mut table = Vec::new();
    for variant in args.variants.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut cfg = base.clone();
        for flag in variant.split('+') {
            apply_ablations(&mut cfg, flag)?;
        }
        let sub = dir.join(variant);
        fs::create_dir_all(&sub)?;
        let s = run_seeds(&cfg, &seeds, &sub, &format!("{id}/{variant}"))?;
        println!("{variant}: eval return {:.4} ± {:.4}", s.eval_mean, s.eval_std);
        table.push(serde_json::json!({
            "variant": variant,
            "eval_mean": s.eval_mean,
            "eval_std": s.eval_std,
            "consistency_mean": s.consistency_mean,
        }));
    }
    write_json(&dir.join("ablation_summary.json"), &table)?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    let env = Env::new(cfg.env)?;
    let agent = Agent::load(&args.checkpoint, env.spec(), cfg.model_config(), cfg.planner_config())?;
    let summary = evaluate(&agent, &env, args.episodes, &mut stream_rng(args.seed, Stream::Eval))?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parameter(e.to_string()))?;
    println!("{text}");
    if let Some(path) = &args.out {
        prepare_file(path, args.force)?;
        fs::write(path, text + "\n")?;
    }
    Ok(EXIT_OK)
}

/// Random-policy transitions used when judging a trained model.
fn collect_transitions(env: &Env, episodes: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Transition>> {
    let spec = env.spec();
    let mut out = Vec::new();
    for _ in 0..episodes {
        let mut s = env.reset(rng.random());
        for _ in 0..spec.max_episode_steps {
            let action = spec.random_action(rng);
            let r = env.step(&s, &action)?;
            out.push(Transition {
                state: s,
                action,
                reward: r.reward,
                next_state: r.next_state.clone(),
                done: r.done,
            });
            if r.done {
                break;
            }
            s = r.next_state;
        }
    }
    Ok(out)
}

pub fn run_diagnose(args: &DiagnoseArgs) -> Result<DiagnosticReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    Ok(match args.suite {
        Suite::Wasserstein => wasserstein_suite(args.instances, &mut rng),
        Suite::Sandwich => {
            let cfg = SandwichConfig {
                critic_steps: args.critic_steps,
                ..SandwichConfig::default()
            };
            sandwich_suite(args.cases, &cfg, &mut rng)?.0
        }
        Suite::Lipschitz => lipschitz_suite(5, args.critic_steps, 1.3, &mut rng)?,
        Suite::Consistency => consistency_report(args, &mut rng)?,
        Suite::Adversarial => adversarial_report(args)?,
    })
}

fn consistency_report(args: &DiagnoseArgs, rng: &mut ChaCha8Rng) -> Result<DiagnosticReport> {
    let cfg = load_config(&args.config)?;
    let mut report = DiagnosticReport::new("consistency");
    if let Some(ckpt) = &args.checkpoint {
        let env = Env::new(cfg.env)?;
        let agent = Agent::load(ckpt, env.spec(), cfg.model_config(), cfg.planner_config())?;
        let data = collect_transitions(&env, args.episodes.max(1), rng)?;
        let err = dynamics_consistency_error(&agent.model, &data)?;
        report.checks.push(Check::leq("consistency_error_finite", 0.0, if err.is_finite() { err } else { -1.0 }, 0.0));
        report.details = Some(serde_json::json!({ "consistency_error": err, "transitions": data.len() }));
        return Ok(report);
    }
    // Without a checkpoint: flexible-loss runs against λ = 0 runs.
    let seeds = parse_seeds(args.seeds.as_deref(), cfg.seed)?;
    let mut flex = Vec::new();
    let mut plain = Vec::new();
    for &seed in &seeds {
        let mut run = cfg.clone();
        run.seed = seed;
        flex.push(train(&run, None)?.consistency_error);
        run.lambda = Some(0.0);
        plain.push(train(&run, None)?.consistency_error);
    }
    let (fm, _) = mean_std(&flex);
    let (pm, _) = mean_std(&plain);
    report.checks.push(Check::leq("lambda0_le_flexible", pm, fm, 0.0));
    report.details = Some(serde_json::json!({ "seeds": seeds, "flexible": flex, "lambda0": plain }));
    Ok(report)
}

fn adversarial_report(args: &DiagnoseArgs) -> Result<DiagnosticReport> {
    let cfg = load_config(&args.config)?;
    let strengths = parse_list(&args.strengths)?;
    let points = adversarial_eval(&cfg, &strengths)?;
    let ratio = cfg.adversarial.map_or(DEFAULT_INJECTION_RATIO, |a| a.ratio);
    let expected = (ratio * cfg.total_env_steps as f64).round();
    let mut report = DiagnosticReport::new("adversarial");
    for p in &points {
        if p.strength > 0.0 {
            report.checks.push(Check::leq(
                format!("strength{}/injected_count", p.strength),
                (p.injected as f64 - expected).abs(),
                1.0,
                0.0,
            ));
        }
    }
    report.details = Some(serde_json::json!({ "points": points, "csv": adversarial_csv(&points) }));
    Ok(report)
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<i32> {
    let suite = format!("{:?}", args.suite).to_lowercase();
    let path = args.out.clone().unwrap_or_else(|| out_root().join(format!("diagnose_{suite}.json")));
    prepare_file(&path, args.force)?;
    let report = run_diagnose(args)?;
    write_json(&path, &report)?;
    if args.suite == Suite::Adversarial {
        if let Some(csv) = report.details.as_ref().and_then(|d| d["csv"].as_str()) {
            fs::write(path.with_extension("csv"), csv)?;
        }
    }
    for c in &report.checks {
        println!("{:<48} {:>14.6e} <= {:>14.6e} + {:.3e}  {:?}", c.name, c.lhs, c.rhs, c.slack, c.status);
    }
    let (pass, fail, inc) = (report.count(CheckStatus::Pass), report.count(CheckStatus::Fail), report.count(CheckStatus::Inconclusive));
    println!("{suite}: {pass} pass, {fail} fail, {inc} inconclusive; report {}", path.display());
    Ok(if fail > 0 { EXIT_DIAGNOSTIC } else { EXIT_OK })
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Diagnose(a) => cmd_diagnose(a),
        Cmd::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
