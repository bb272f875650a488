use crate::env::{Event, Frame, GridEnv, Task};

use super::learner::{EpisodeLog, Feedback, Learner};
use super::tracker::ConvergenceTracker;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEpisode {
    pub reward: f64,
    pub task1: u64,
    pub task2: u64,
    pub exploration: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub agents: Vec<AgentEpisode>,
    pub logs: Vec<EpisodeLog>,
    pub population_reward: f64,
}

/// Optional per-episode sinks.
#[derive(Default)]
pub struct EpisodeSinks<'a> {
    /// One tracker per agent, fed every parameter update.
    pub trackers: Option<&'a mut [ConvergenceTracker]>,
    /// Receives the reset frame and one frame per step.
    pub frames: Option<&'a mut Vec<Frame>>,
}

/// Plays one episode with `learners[i]` controlling agent `i`. Each learner
/// only ever sees its own observation, action and reward.
pub fn run_episode(
    env: &mut GridEnv,
    learners: &mut [Box<dyn Learner>],
    episode: usize,
    total_episodes: usize,
    mut sinks: EpisodeSinks<'_>,
) -> Result<EpisodeRecord, HarnessError> {
    let n = env.config().n_agents;
    if learners.len() != n {
        return Err(HarnessError::LearnerCount { expected: n, got: learners.len() });
    }
    if let Some(t) = sinks.trackers.as_deref() {
        if t.len() != n {
            return Err(HarnessError::LearnerCount { expected: n, got: t.len() });
        }
    }
    for l in learners.iter_mut() {
        l.begin_episode(episode, total_episodes);
    }
    let mut obs = env.reset()?;
    if let Some(f) = sinks.frames.as_deref_mut() {
        f.push(env.render_frame());
    }
    let mut agents = vec![AgentEpisode { reward: 0.0, task1: 0, task2: 0, exploration: 0.0, steps: 0 }; n];
    loop {
        let mut actions = Vec::with_capacity(n);
        for (i, (l, o)) in learners.iter_mut().zip(&obs).enumerate() {
            actions.push(l.act(o).map_err(|e| HarnessError::Learner { agent: i, source: e })?);
        }
        let (next, res) = env.step(&actions)?;
        if let Some(f) = sinks.frames.as_deref_mut() {
            f.push(env.render_frame());
        }
        for ev in &res.events {
            if let Event::TaskCompleted { agent, task, .. } = *ev {
                match task {
                    Task::One => agents[agent].task1 += 1,
                    Task::Two => agents[agent].task2 += 1,
                }
            }
        }
        let truncated = res.done && !res.terminated;
        for i in 0..n {
            agents[i].reward += res.rewards[i];
            agents[i].steps += 1;
            let fb = Feedback {
                obs: &obs[i],
                action: actions[i],
                reward: res.rewards[i],
                next_obs: &next[i],
                terminal: res.terminated,
                truncated,
            };
            let update = learners[i].feedback(fb).map_err(|e| HarnessError::Learner { agent: i, source: e })?;
            if let Some(u) = update {
                if !u.loss.is_finite() {
                    return Err(HarnessError::NonFiniteLoss { agent: i, episode, loss: u.loss });
                }
                if let Some(t) = sinks.trackers.as_deref_mut() {
                    if u.param_norm > 0.0 {
                        t[i].track(u.delta_norm, u.param_norm, episode);
                    }
                }
            }
        }
        obs = next;
        if res.done {
            break;
        }
    }
    let mut logs = Vec::with_capacity(n);
    for (a, l) in agents.iter_mut().zip(learners.iter_mut()) {
        a.exploration = l.exploration();
        logs.push(l.end_episode());
    }
    let population_reward = agents.iter().map(|a| a.reward).sum();
    Ok(EpisodeRecord { episode, agents, logs, population_reward })
}
