use rand_chacha::ChaCha8Rng;

use crate::a2c::{A2cAgent, A2cConfig, A2cError};
use crate::dqn::{beta_at, epsilon_at, DqnAgent, DqnConfig, DqnError, Transition};
use crate::env::{Action, Observation};
use crate::nn::{NnError, ParamSet, TrunkSpec};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error(transparent)]
    A2c(#[from] A2cError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("scripted learner ran out of actions at step {0}")]
    ScriptExhausted(usize),
}

/// What one agent gets back after a joint step: nothing about other agents.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub obs: &'a Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: &'a Observation,
    /// All resources consumed.
    pub terminal: bool,
    /// Episode cut at the step limit.
    pub truncated: bool,
}

/// Outcome of one parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    pub loss: f64,
    pub delta_norm: f64,
    pub param_norm: f64,
}

/// Algorithm-specific per-episode statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpisodeLog {
    Dqn { epsilon: f64, mean_loss: Option<f64>, buffer_fill: usize, updates: u64 },
    A2c { entropy: f64, actor_loss: Option<f64>, critic_loss: Option<f64>, updates: u64 },
    Scripted,
}

pub trait Learner: Send {
    fn begin_episode(&mut self, _episode: usize, _total_episodes: usize) {}

    fn act(&mut self, obs: &Observation) -> Result<Action, LearnerError>;

    fn feedback(&mut self, fb: Feedback<'_>) -> Result<Option<UpdateInfo>, LearnerError>;

    /// ε for value learners, mean policy entropy for actor-critic, over the
    /// current episode.
    fn exploration(&self) -> f64;

    /// Statistics for the episode just played; resets the accumulators.
    fn end_episode(&mut self) -> EpisodeLog;

    /// Flattened parameters, for inspection and isolation tests.
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

fn flatten(p: &ParamSet<f32>) -> Vec<f64> {
    p.tensors.iter().flat_map(|t| t.data.iter().map(|&v| v as f64)).collect()
}

pub struct DqnLearner {
    agent: DqnAgent<f32>,
    action_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    epsilon: f64,
    beta: f64,
    env_steps: u64,
    loss_sum: f64,
    updates: u64,
}

impl DqnLearner {
    pub fn new(
        cfg: DqnConfig,
        trunk: TrunkSpec,
        mut init_rng: ChaCha8Rng,
        action_rng: ChaCha8Rng,
        sampler_rng: ChaCha8Rng,
    ) -> Result<Self, LearnerError> {
        let agent = DqnAgent::new(cfg, trunk, &mut init_rng)?;
        let epsilon = agent.config().eps_start;
        let beta = agent.config().per_beta_start;
        Ok(Self { agent, action_rng, sampler_rng, epsilon, beta, env_steps: 0, loss_sum: 0.0, updates: 0 })
    }

    pub fn agent(&self) -> &DqnAgent<f32> {
        &self.agent
    }
}

impl Learner for DqnLearner {
    fn begin_episode(&mut self, episode: usize, total_episodes: usize) {
        self.epsilon = epsilon_at(episode, total_episodes, self.agent.config());
        self.beta = beta_at(episode, total_episodes, self.agent.config());
    }

    fn act(&mut self, obs: &Observation) -> Result<Action, LearnerError> {
        Ok(self.agent.act(obs, self.epsilon, &mut self.action_rng)?)
    }

    fn feedback(&mut self, fb: Feedback<'_>) -> Result<Option<UpdateInfo>, LearnerError> {
        self.agent.store(Transition {
            obs: fb.obs.clone(),
            action: fb.action.index(),
            reward: fb.reward,
            next_obs: fb.next_obs.clone(),
            terminal: fb.terminal,
        });
        self.env_steps += 1;
        if !self.agent.ready() || !self.env_steps.is_multiple_of(self.agent.config().learn_every) {
            return Ok(None);
        }
        let r = self.agent.learn_step(self.beta, &mut self.sampler_rng)?;
        self.loss_sum += r.loss;
        self.updates += 1;
        Ok(Some(UpdateInfo { loss: r.loss, delta_norm: r.delta_norm, param_norm: r.param_norm }))
    }

    fn exploration(&self) -> f64 {
        self.epsilon
    }

    fn end_episode(&mut self) -> EpisodeLog {
        let log = EpisodeLog::Dqn {
            epsilon: self.epsilon,
            mean_loss: (self.updates > 0).then(|| self.loss_sum / self.updates as f64),
            buffer_fill: self.agent.buffer().len(),
            updates: self.updates,
        };
        self.loss_sum = 0.0;
        self.updates = 0;
        log
    }

    fn parameters(&self) -> Vec<f64> {
        flatten(self.agent.online().params())
    }
}

pub struct A2cLearner {
    agent: A2cAgent<f32>,
    action_rng: ChaCha8Rng,
    entropy_sum: f64,
    acts: u64,
    actor_sum: f64,
    critic_sum: f64,
    updates: u64,
}

impl A2cLearner {
    pub fn new(
        cfg: A2cConfig,
        trunk: TrunkSpec,
        mut init_rng: ChaCha8Rng,
        action_rng: ChaCha8Rng,
    ) -> Result<Self, LearnerError> {
        let agent = A2cAgent::new(cfg, trunk, &mut init_rng)?;
        Ok(Self { agent, action_rng, entropy_sum: 0.0, acts: 0, actor_sum: 0.0, critic_sum: 0.0, updates: 0 })
    }

    pub fn agent(&self) -> &A2cAgent<f32> {
        &self.agent
    }
}

impl Learner for A2cLearner {
    fn act(&mut self, obs: &Observation) -> Result<Action, LearnerError> {
        let out = self.agent.act(obs, &mut self.action_rng)?;
        self.entropy_sum += out.entropy;
        self.acts += 1;
        Ok(out.action)
    }

    fn feedback(&mut self, fb: Feedback<'_>) -> Result<Option<UpdateInfo>, LearnerError> {
        let Some(r) = self.agent.observe(fb.reward, fb.next_obs, fb.terminal, fb.truncated)? else {
            return Ok(None);
        };
        self.actor_sum += r.losses.actor;
        self.critic_sum += r.losses.critic;
        self.updates += 1;
        Ok(Some(UpdateInfo { loss: r.losses.total, delta_norm: r.delta_norm, param_norm: r.param_norm }))
    }

    fn exploration(&self) -> f64 {
        if self.acts == 0 {
            0.0
        } else {
            self.entropy_sum / self.acts as f64
        }
    }

    fn end_episode(&mut self) -> EpisodeLog {
        let mean = |s: f64| (self.updates > 0).then(|| s / self.updates as f64);
        let log = EpisodeLog::A2c {
            entropy: self.exploration(),
            actor_loss: mean(self.actor_sum),
            critic_loss: mean(self.critic_sum),
            updates: self.updates,
        };
        self.entropy_sum = 0.0;
        self.acts = 0;
        self.actor_sum = 0.0;
        self.critic_sum = 0.0;
        self.updates = 0;
        log
    }

    fn parameters(&self) -> Vec<f64> {
        flatten(self.agent.network().params())
    }
}

/// Replays a fixed action list, then repeats `fallback` (or fails if none).
#[derive(Debug, Clone)]
pub struct ScriptedLearner {
    script: Vec<Action>,
    fallback: Option<Action>,
    cursor: usize,
}

impl ScriptedLearner {
    pub fn constant(action: Action) -> Self {
        Self { script: Vec::new(), fallback: Some(action), cursor: 0 }
    }

    pub fn sequence(script: Vec<Action>, fallback: Option<Action>) -> Self {
        Self { script, fallback, cursor: 0 }
    }
}

impl Learner for ScriptedLearner {
    fn act(&mut self, _obs: &Observation) -> Result<Action, LearnerError> {
        let a = self.script.get(self.cursor).copied().or(self.fallback);
        self.cursor += 1;
        a.ok_or(LearnerError::ScriptExhausted(self.cursor - 1))
    }

    fn feedback(&mut self, _fb: Feedback<'_>) -> Result<Option<UpdateInfo>, LearnerError> {
        Ok(None)
    }

    fn exploration(&self) -> f64 {
        0.0
    }

    fn end_episode(&mut self) -> EpisodeLog {
        EpisodeLog::Scripted
    }
}
