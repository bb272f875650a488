use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Bottleneck, GridEnv};
use crate::metrics::{population_specialization, specialization, task_fairness, TaskCounts, EPISODES_HEADER};

use super::config::{Algo, ExperimentConfig, RunPoint};
use super::episode::{run_episode, EpisodeRecord, EpisodeSinks};
use super::learner::{A2cLearner, DqnLearner, EpisodeLog, Learner};
use super::rng::derive_rngs;
use super::tracker::ConvergenceTracker;
use super::HarnessError;

/// Present while a run is in progress or after it failed; holds the error
/// message in the latter case.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
const PART: &str = ".part";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub name: String,
    pub algo: Algo,
    pub agents: usize,
    pub bottleneck: Bottleneck,
    pub seed: u64,
    pub episodes: usize,
}

/// Defaults the results depend on that are not learned from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    pub max_steps: u64,
    pub n_resources: usize,
    pub specialization_when_idle: f64,
    pub fairness_basis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTotals {
    pub id: usize,
    pub task1: u64,
    pub task2: u64,
    pub reward: f64,
    pub specialization: f64,
    pub converged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTotals {
    pub total_reward: f64,
    pub mean_specialization: f64,
    pub fairness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: RunInfo,
    pub config: ExperimentConfig,
    pub assumptions: Assumptions,
    pub agents: Vec<AgentTotals>,
    pub population: PopulationTotals,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub point: RunPoint,
    pub dir: PathBuf,
    pub result: Result<RunSummary, HarnessError>,
}

pub fn build_learners(cfg: &ExperimentConfig, point: RunPoint) -> Result<Vec<Box<dyn Learner>>, HarnessError> {
    let rngs = derive_rngs(point.seed, point.agents);
    let mut out: Vec<Box<dyn Learner>> = Vec::with_capacity(point.agents);
    for i in 0..point.agents {
        let (init, action, sampler) = (rngs.init[i].clone(), rngs.action[i].clone(), rngs.sampler[i].clone());
        let learner: Result<Box<dyn Learner>, _> = match cfg.algo {
            Algo::Dddqn => DqnLearner::new(cfg.dqn.clone(), cfg.network, init, action, sampler)
                .map(|l| Box::new(l) as Box<dyn Learner>),
            Algo::A2c => A2cLearner::new(cfg.a2c.clone(), cfg.network, init, action).map(|l| Box::new(l) as _),
        };
        out.push(learner.map_err(|e| HarnessError::Learner { agent: i, source: e })?);
    }
    Ok(out)
}

pub fn build_env(cfg: &ExperimentConfig, point: RunPoint) -> Result<GridEnv, HarnessError> {
    let rngs = derive_rngs(point.seed, 0);
    Ok(GridEnv::with_rng(cfg.env_for(point), rngs.env)?)
}

fn learning_header(algo: Algo) -> &'static str {
    match algo {
        Algo::Dddqn => "episode,agent_id,epsilon,mean_loss,buffer_fill,updates",
        Algo::A2c => "episode,agent_id,entropy,actor_loss,critic_loss,updates",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn learning_row(episode: usize, agent: usize, log: &EpisodeLog) -> String {
    match *log {
        EpisodeLog::Dqn { epsilon, mean_loss, buffer_fill, updates } => {
            format!("{episode},{agent},{epsilon},{},{buffer_fill},{updates}", opt(mean_loss))
        }
        EpisodeLog::A2c { entropy, actor_loss, critic_loss, updates } => {
            format!("{episode},{agent},{entropy},{},{},{updates}", opt(actor_loss), opt(critic_loss))
        }
        EpisodeLog::Scripted => format!("{episode},{agent},,,,0"),
    }
}

fn episode_rows(rec: &EpisodeRecord) -> String {
    let mut s = String::new();
    for (i, a) in rec.agents.iter().enumerate() {
        s.push_str(&format!(
            "{},{i},{},{},{},{},{}\n",
            rec.episode, a.reward, a.task1, a.task2, a.exploration, a.steps
        ));
    }
    s
}

struct PartFile {
    tmp: PathBuf,
    dest: PathBuf,
    out: BufWriter<File>,
}

impl PartFile {
    fn create(dir: &Path, name: &str) -> Result<Self, HarnessError> {
        let dest = dir.join(name);
        let tmp = dir.join(format!("{name}{PART}"));
        let f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        Ok(Self { tmp, dest, out: BufWriter::new(f) })
    }

    fn write(&mut self, s: &str) -> Result<(), HarnessError> {
        self.out.write_all(s.as_bytes()).map_err(|e| io_err(&self.tmp, e))
    }

    fn commit(self) -> Result<(), HarnessError> {
        let f = self.out.into_inner().map_err(|e| io_err(&self.tmp, e.into_error()))?;
        f.sync_all().map_err(|e| io_err(&self.tmp, e))?;
        fs::rename(&self.tmp, &self.dest).map_err(|e| io_err(&self.dest, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), source }
}

/// Trains one sweep point into `dir`. Final files appear only after the run
/// finishes; until then (or after a failure) `INCOMPLETE` marks the directory.
pub fn run_single(cfg: &ExperimentConfig, point: RunPoint, dir: &Path) -> Result<RunSummary, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, "running\n").map_err(|e| io_err(&marker, e))?;
    for name in ["episodes.csv", "learning.csv", "frames.jsonl", "summary.json"] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    let result = train(cfg, point, dir);
    match &result {
        Ok(_) => fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?,
        Err(e) => {
            let _ = fs::write(&marker, format!("failed: {e}\n"));
        }
    }
    result
}

fn train(cfg: &ExperimentConfig, point: RunPoint, dir: &Path) -> Result<RunSummary, HarnessError> {
    let mut env = build_env(cfg, point)?;
    let mut learners = build_learners(cfg, point)?;
    let mut trackers = vec![ConvergenceTracker::new(cfg.convergence); point.agents];

    let mut episodes = PartFile::create(dir, "episodes.csv")?;
    episodes.write(&format!("{EPISODES_HEADER}\n"))?;
    let mut learning = PartFile::create(dir, "learning.csv")?;
    learning.write(&format!("{}\n", learning_header(cfg.algo)))?;
    let mut frames_file =
        if cfg.replay_episodes.is_empty() { None } else { Some(PartFile::create(dir, "frames.jsonl")?) };

    let mut totals = vec![(TaskCounts::default(), 0.0f64); point.agents];
    let mut frames = Vec::new();
    for ep in 0..cfg.train_episodes {
        let replay = frames_file.is_some() && cfg.replay_episodes.contains(&ep);
        frames.clear();
        let sinks = EpisodeSinks { trackers: Some(&mut trackers), frames: replay.then_some(&mut frames) };
        let rec = run_episode(&mut env, &mut learners, ep, cfg.train_episodes, sinks)?;
        episodes.write(&episode_rows(&rec))?;
        let mut rows = String::new();
        for (i, log) in rec.logs.iter().enumerate() {
            rows.push_str(&learning_row(ep, i, log));
            rows.push('\n');
        }
        learning.write(&rows)?;
        if let Some(f) = frames_file.as_mut() {
            for fr in &frames {
                f.write(&fr.to_json_line())?;
                f.write("\n")?;
            }
        }
        for (t, a) in totals.iter_mut().zip(&rec.agents) {
            t.0 += TaskCounts::new(a.task1, a.task2);
            t.1 += a.reward;
        }
    }
    episodes.commit()?;
    learning.commit()?;
    if let Some(f) = frames_file {
        f.commit()?;
    }

    let counts: Vec<TaskCounts> = totals.iter().map(|t| t.0).collect();
    let agents = totals
        .iter()
        .enumerate()
        .map(|(id, &(c, reward))| AgentTotals {
            id,
            task1: c.t1,
            task2: c.t2,
            reward,
            specialization: specialization(c),
            converged_at: trackers[id].converged_at(),
        })
        .collect::<Vec<_>>();
    let summary = RunSummary {
        run: RunInfo {
            name: point.dir_name(),
            algo: cfg.algo,
            agents: point.agents,
            bottleneck: point.bottleneck,
            seed: point.seed,
            episodes: cfg.train_episodes,
        },
        config: cfg.clone(),
        assumptions: Assumptions {
            max_steps: cfg.env.max_steps,
            n_resources: cfg.env.n_resources,
            specialization_when_idle: 0.0,
            fairness_basis: "task_completions".into(),
        },
        population: PopulationTotals {
            total_reward: agents.iter().map(|a| a.reward).sum(),
            mean_specialization: population_specialization(&counts).unwrap_or(0.0),
            fairness: task_fairness(&counts),
        },
        agents,
    };
    let mut s = PartFile::create(dir, "summary.json")?;
    s.write(&serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    s.write("\n")?;
    s.commit()?;
    Ok(summary)
}

/// Runs every sweep point under `cfg.output_dir`, in parallel across points.
/// A failing run does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let outcomes = cfg
        .points()
        .into_par_iter()
        .map(|point| {
            let dir = cfg.output_dir.join(point.dir_name());
            let result = run_single(cfg, point, &dir);
            RunOutcome { point, dir, result }
        })
        .collect();
    Ok(outcomes)
}
