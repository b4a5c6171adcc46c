//! Training loop: act with the planner, store transitions, update the world
//! model on replayed segments, log metrics and write checkpoints.

mod adversarial;
mod agent;
mod buffer;
mod config;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envs::{Env, HybridAction};
use crate::error::{Error, Result};
use crate::world_model::{LossLog, LossReport, Transition, UpdateOptions, WorldModel};

pub use adversarial::{inject_adversarial, perturb_transition};
pub use agent::Agent;
pub use buffer::ReplayBuffer;
pub use config::{apply_override, env_defaults, Ablations, AdversarialInjection, EnvDefaults, TrainConfig};
pub use metrics::{mean_std, metrics_csv, MetricsRow, METRICS_CSV_HEADER};

use metrics::Window;

/// Consecutive skipped updates that abort a run.
pub const MAX_CONSECUTIVE_SKIPS: usize = 10;

/// Independent random streams derived from the run seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    EnvReset = 1,
    Act = 2,
    Replay = 3,
    ModelUpdate = 4,
    Adversarial = 5,
    Eval = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl EvalSummary {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&returns);
        Self { returns, mean, std }
    }
}

/// Everything a run produces in memory.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    /// One row per model update, keyed by env step.
    pub losses: LossLog,
    /// `(env step at episode end, return)`.
    pub episode_returns: Vec<(u64, f64)>,
    /// Mean `‖s' − mean prediction‖₂` over every env step of the run.
    pub consistency_error: f64,
    pub eval: EvalSummary,
    /// Env step of the first operation that an ablation flag would disable.
    pub first_flagged_step: Option<u64>,
    pub injected: usize,
    pub updates: u64,
    pub skipped_updates: u64,
    pub agent: Agent,
    pub files: Vec<PathBuf>,
}

/// Greedy evaluation: planning at the temperature floor without keeping
/// any head updates.
pub fn evaluate(agent: &Agent, env: &Env, episodes: usize, rng: &mut ChaCha8Rng) -> Result<EvalSummary> {
    let mut planner = agent.planner.clone();
    planner.temperature = planner.cfg.temperature_floor;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(rng.random());
        let mut ret = 0.0;
        for _ in 0..env.spec().max_episode_steps {
            let a = planner.plan_frozen(&agent.model, &s, rng)?;
            let r = env.step(&s, &a)?;
            ret += r.reward;
            s = r.next_state;
            if r.done {
                break;
            }
        }
        returns.push(ret);
    }
    Ok(EvalSummary::from_returns(returns))
}

fn consistency_error(model: &WorldModel, s: &[f64], a: &HybridAction, next: &[f64]) -> Result<f64> {
    let p = model.predict(s, a)?;
    Ok(p.mean.iter().zip(next).map(|(m, x)| (m - x).powi(2)).sum::<f64>().sqrt())
}

fn write_file(files: &mut Vec<PathBuf>, dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Runs one training job. With `out` set, artifacts are written there:
/// `config.toml`, `metrics.csv`, `losses.csv`, `eval.json` and checkpoints.
pub fn train(cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = Env::new(cfg.env)?;
    let spec = env.spec().clone();
    let mut files = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_file(&mut files, dir, "config.toml", &cfg.to_toml())?;
    }

    let mut agent = Agent::new(&spec, cfg.model_config(), cfg.planner_config(), &mut stream_rng(cfg.seed, Stream::Init))?;
    if let Some(dir) = out {
        let path = dir.join("checkpoint_init.ckpt");
        agent.save(&path)?;
        files.push(path);
    }
    let mut env_rng = stream_rng(cfg.seed, Stream::EnvReset);
    let mut act_rng = stream_rng(cfg.seed, Stream::Act);
    let mut replay_rng = stream_rng(cfg.seed, Stream::Replay);
    let mut model_rng = stream_rng(cfg.seed, Stream::ModelUpdate);
    let mut adv_rng = stream_rng(cfg.seed, Stream::Adversarial);

    let horizon = cfg.horizon();
    let lambda = cfg.effective_lambda();
    let eta = cfg.effective_eta();
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, horizon)?;
    let mut window = Window::default();
    let mut metrics = Vec::new();
    let mut losses = LossLog::default();
    let mut episode_returns = Vec::new();
    let mut consistency_sum = 0.0;
    let mut first_flagged: Option<u64> = None;
    let mut injected = 0usize;
    let mut injection_attempts = 0u64;
    let (mut updates, mut skipped, mut consecutive) = (0u64, 0u64, 0usize);
    let mut recent: Vec<LossReport> = Vec::new();

    let mut state = if cfg.total_env_steps > 0 {
        env.reset(env_rng.random())
    } else {
        Vec::new()
    };
    let mut episode_return = 0.0;
    for step in 0..cfg.total_env_steps {
        let timestep = step + 1;
        let action = if step < cfg.warmup_steps {
            spec.random_action(&mut act_rng)
        } else {
            if eta > 0.0 {
                first_flagged.get_or_insert(timestep);
            }
            agent.planner.plan(&agent.model, &state, &mut act_rng)?
        };
        agent.planner.anneal();
        let result = env.step(&state, &action)?;
        let err = consistency_error(&agent.model, &state, &action, &result.next_state)?;
        consistency_sum += err;
        window.consistency(err);
        episode_return += result.reward;
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: result.reward,
            next_state: result.next_state.clone(),
            done: result.done,
        });
        if let Some(adv) = cfg.adversarial {
            let quota = (adv.ratio * buffer.total_pushed() as f64).round() as u64;
            while injection_attempts < quota {
                injection_attempts += 1;
                let last = buffer.len() - 1;
                let t = buffer.get_mut(last).expect("just pushed");
                if perturb_transition(&agent.model, t, adv.strength, &mut adv_rng)? {
                    injected += 1;
                }
            }
        }
        if result.done {
            episode_returns.push((timestep, episode_return));
            window.episode(episode_return);
            episode_return = 0.0;
            state = env.reset(env_rng.random());
        } else {
            state = result.next_state;
        }

        let smoothing = cfg.smoothing_active(timestep);
        for _ in 0..cfg.model_updates_per_env_step {
            let batch = match buffer.sample_segments(cfg.batch_size, cfg.gamma, &mut replay_rng) {
                Ok(b) => b,
                Err(Error::Warmup(_)) => break,
                Err(e) => return Err(e),
            };
            if lambda > 0.0 || smoothing {
                first_flagged.get_or_insert(timestep);
            }
            let opts = UpdateOptions {
                lambda,
                mu: cfg.mu(),
                epsilon: cfg.epsilon(),
                alpha: cfg.alpha,
                smoothing_active: smoothing,
            };
            let report = agent.model.update(&batch, &opts, &mut model_rng)?;
            updates += 1;
            if report.critic_reset {
                warn!("step {timestep}: critic reset after divergence");
            }
            recent.push(report);
            if recent.len() > MAX_CONSECUTIVE_SKIPS {
                recent.remove(0);
            }
            if report.skipped {
                skipped += 1;
                consecutive += 1;
                warn!("step {timestep}: non-finite loss, update skipped");
                if consecutive >= MAX_CONSECUTIVE_SKIPS {
                    if let Some(dir) = out {
                        let dump = serde_json::json!({
                            "env_step": timestep,
                            "recent_updates": recent.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>(),
                        });
                        fs::write(dir.join("abort_dump.json"), serde_json::to_string_pretty(&dump).expect("json"))?;
                    }
                    return Err(Error::Aborted(format!(
                        "{MAX_CONSECUTIVE_SKIPS} consecutive non-finite updates at env step {timestep}"
                    )));
                }
            } else {
                consecutive = 0;
                window.update(&report);
            }
            losses.push(timestep, report);
        }

        if timestep % cfg.metrics_interval == 0 {
            let row = window.flush(timestep, smoothing);
            info!(
                "step {timestep}: return {:?} consistency {:.4} dyn {:.4} rew {:.4}",
                row.episode_return, row.dyn_consistency_error, row.loss_org_dyn, row.loss_org_rew
            );
            metrics.push(row);
        }
        if cfg.checkpoint_interval > 0 && timestep % cfg.checkpoint_interval == 0 {
            if let Some(dir) = out {
                let path = dir.join(format!("checkpoint_step{timestep}.ckpt"));
                agent.save(&path)?;
                files.push(path);
            }
        }
    }

    let eval = if cfg.total_env_steps == 0 {
        EvalSummary::from_returns(Vec::new())
    } else {
        evaluate(&agent, &env, cfg.eval_episodes, &mut stream_rng(cfg.seed, Stream::Eval))?
    };
    if let Some(dir) = out {
        write_file(&mut files, dir, "metrics.csv", &metrics_csv(&metrics))?;
        write_file(&mut files, dir, "losses.csv", &losses.to_csv())?;
        write_file(&mut files, dir, "eval.json", &serde_json::to_string_pretty(&eval).expect("json"))?;
        let path = dir.join("checkpoint_final.ckpt");
        agent.save(&path)?;
        files.push(path);
    }
    Ok(TrainOutcome {
        metrics,
        losses,
        episode_returns,
        consistency_error: if cfg.total_env_steps == 0 {
            0.0
        } else {
            consistency_sum / cfg.total_env_steps as f64
        },
        eval,
        first_flagged_step: first_flagged,
        injected,
        updates,
        skipped_updates: skipped,
        agent,
        files,
    })
}
