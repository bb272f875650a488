use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{population_specialization, task_fairness, TaskCounts};
use crate::env::Bottleneck;

pub const EPISODES_HEADER: &str = "episode,agent_id,reward,task1,task2,exploration,steps";
pub const TABLE_HEADER: &str = "agents,bottleneck,mean_spec,std_spec,mean_fairness,n_seeds";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}: missing summary.json", dir.display())]
    MissingSummary { dir: PathBuf },
    #[error("{}: {message}", path.display())]
    BadSummary { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Malformed { path: PathBuf, line: usize, message: String },
}

#[derive(Deserialize)]
struct SummaryHead {
    run: RunHead,
}

#[derive(Deserialize)]
struct RunHead {
    agents: usize,
    bottleneck: Bottleneck,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct EpisodeRow {
    episode: usize,
    agent_id: usize,
    reward: f64,
    task1: u64,
    task2: u64,
}

/// Per-run statistics recomputed from `episodes.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub dir: PathBuf,
    pub agents: usize,
    pub bottleneck: Bottleneck,
    pub seed: u64,
    /// Episodes that fell inside the window.
    pub episodes: usize,
    pub counts: Vec<TaskCounts>,
    pub rewards: Vec<f64>,
    pub mean_specialization: f64,
    /// Jain index over per-agent completions; `None` when none happened.
    pub fairness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub agents: usize,
    pub bottleneck: Bottleneck,
    pub mean_spec: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std_spec: f64,
    pub mean_fairness: Option<f64>,
    pub n_seeds: usize,
}

fn parse_row(line: &str) -> Result<EpisodeRow, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, found {}", f.len()));
    }
    fn p<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
        s.parse().map_err(|_| format!("bad {name} {s:?}"))
    }
    let row = EpisodeRow {
        episode: p(f[0], "episode")?,
        agent_id: p(f[1], "agent_id")?,
        reward: p(f[2], "reward")?,
        task1: p(f[3], "task1")?,
        task2: p(f[4], "task2")?,
    };
    let _: f64 = p(f[5], "exploration")?;
    let _: u64 = p(f[6], "steps")?;
    if !row.reward.is_finite() {
        return Err(format!("non-finite reward {}", f[2]));
    }
    Ok(row)
}

/// Reads one run directory. With `window = Some(k)` only the last `k`
/// episodes count; otherwise the whole run.
pub fn load_run(dir: &Path, window: Option<usize>) -> Result<RunStats, RunError> {
    let summary_path = dir.join("summary.json");
    if !summary_path.is_file() {
        return Err(RunError::MissingSummary { dir: dir.to_path_buf() });
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    let text = std::fs::read_to_string(&summary_path).map_err(io(&summary_path))?;
    let head: SummaryHead = serde_json::from_str(&text)
        .map_err(|e| RunError::BadSummary { path: summary_path.clone(), message: e.to_string() })?;
    let RunHead { agents, bottleneck, seed } = head.run;

    let csv_path = dir.join("episodes.csv");
    let body = std::fs::read_to_string(&csv_path).map_err(io(&csv_path))?;
    let malformed = |line, message| RunError::Malformed { path: csv_path.clone(), line, message };
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EPISODES_HEADER => {}
        Some((_, h)) => return Err(malformed(1, format!("unexpected header {h:?}"))),
        None => return Err(malformed(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = parse_row(line).map_err(|m| malformed(i + 1, m))?;
        if row.agent_id >= agents {
            return Err(malformed(i + 1, format!("agent_id {} but run has {agents} agents", row.agent_id)));
        }
        rows.push(row);
    }
    let n_episodes = rows.iter().map(|r| r.episode + 1).max().unwrap_or(0);
    let first = match window {
        Some(k) => n_episodes.saturating_sub(k),
        None => 0,
    };
    let mut counts = vec![TaskCounts::default(); agents];
    let mut rewards = vec![0.0; agents];
    for r in rows.iter().filter(|r| r.episode >= first) {
        counts[r.agent_id] += TaskCounts::new(r.task1, r.task2);
        rewards[r.agent_id] += r.reward;
    }
    let mean_specialization = population_specialization(&counts)
        .map_err(|e| RunError::BadSummary { path: summary_path.clone(), message: e.to_string() })?;
    Ok(RunStats {
        dir: dir.to_path_buf(),
        agents,
        bottleneck,
        seed,
        episodes: n_episodes - first,
        fairness: task_fairness(&counts),
        counts,
        rewards,
        mean_specialization,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Loads every run, grouping successes by (agents, bottleneck). A bad run is
/// reported without affecting the others.
pub fn analyze(dirs: &[PathBuf], window: Option<usize>) -> (Vec<RunStats>, Vec<GroupRow>, Vec<RunError>) {
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for d in dirs {
        match load_run(d, window) {
            Ok(r) => runs.push(r),
            Err(e) => errors.push(e),
        }
    }
    let mut groups: BTreeMap<(usize, Bottleneck), Vec<&RunStats>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.agents, r.bottleneck)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((agents, bottleneck), members)| {
            let specs: Vec<f64> = members.iter().map(|r| r.mean_specialization).collect();
            let m = mean(&specs);
            let std_spec = if specs.len() > 1 {
                (specs.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (specs.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            let fair: Vec<f64> = members.iter().filter_map(|r| r.fairness).collect();
            GroupRow {
                agents,
                bottleneck,
                mean_spec: m,
                std_spec,
                mean_fairness: (!fair.is_empty()).then(|| mean(&fair)),
                n_seeds: members.len(),
            }
        })
        .collect();
    (runs, rows, errors)
}

/// Comparison CSV; an undefined fairness mean is left empty.
pub fn render_table(rows: &[GroupRow]) -> String {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let fair = r.mean_fairness.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.agents,
            r.bottleneck.label(),
            r.mean_spec,
            r.std_spec,
            fair,
            r.n_seeds
        );
    }
    out
}
