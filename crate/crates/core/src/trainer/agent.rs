use std::path::Path;

use rand::Rng;

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, take_block};
use crate::planner::{Planner, PlannerConfig, PI_BLOCK, P_BLOCK};
use crate::world_model::{ModelDims, WorldModel, WorldModelConfig, CRITIC_BLOCK, DYNAMICS_BLOCK, REWARD_BLOCK};

const CRITIC_INIT_BLOCK: &str = "critic_init";

/// World model plus planner heads; the unit that gets checkpointed.
#[derive(Clone, Debug)]
pub struct Agent {
    pub model: WorldModel,
    pub planner: Planner,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, model_cfg: WorldModelConfig, planner_cfg: PlannerConfig, rng: &mut R) -> Result<Self> {
        let model = WorldModel::for_env(spec, model_cfg, rng)?;
        let planner = Planner::new(spec, planner_cfg, rng)?;
        Ok(Self { model, planner })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut critic_init = self.model.critic_init().clone();
        critic_init.name = CRITIC_INIT_BLOCK.into();
        save_checkpoint(
            path,
            &[
                &self.model.dynamics.params,
                &self.model.reward.params,
                &self.model.critic.params,
                &critic_init,
                &self.planner.pi_beta.params,
                &self.planner.p_theta.params,
            ],
        )
    }

    /// Restores an agent for `spec`. Hidden sizes come from the checkpoint;
    /// input sizes must match the environment.
    pub fn load(path: &Path, spec: &EnvSpec, model_cfg: WorldModelConfig, planner_cfg: PlannerConfig) -> Result<Self> {
        let mut blocks = load_checkpoint(path)?;
        let dynamics = take_block(&mut blocks, DYNAMICS_BLOCK)?;
        let expected = ModelDims::of(spec).input_dim();
        let got = dynamics.layers.first().map(|l| l.weight.cols()).unwrap_or(0);
        if got != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint model input dim {got} does not match {} input dim {expected}",
                spec.id
            )));
        }
        let hidden: Vec<usize> = dynamics.layers.iter().rev().skip(1).rev().map(|l| l.weight.rows()).collect();
        let pi = take_block(&mut blocks, PI_BLOCK)?;
        let planner_hidden: Vec<usize> = pi.layers.iter().rev().skip(1).rev().map(|l| l.weight.rows()).collect();
        let reward = take_block(&mut blocks, REWARD_BLOCK)?;
        let critic = take_block(&mut blocks, CRITIC_BLOCK)?;
        let mut critic_init = take_block(&mut blocks, CRITIC_INIT_BLOCK)?;
        critic_init.name = CRITIC_BLOCK.into();
        let p = take_block(&mut blocks, P_BLOCK)?;

        let mut seed_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut agent = Agent::new(
            spec,
            WorldModelConfig {
                hidden_dims: hidden,
                ..model_cfg
            },
            PlannerConfig {
                hidden_dims: planner_hidden,
                ..planner_cfg
            },
            &mut seed_rng,
        )?;
        agent.model.load_blocks(dynamics, reward, critic)?;
        agent.model.set_critic_init(critic_init)?;
        agent.planner.load_blocks(pi, p)?;
        Ok(agent)
    }
}
