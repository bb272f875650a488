//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;
use taskgrid::env::{Action, Area, Event, GridEnv, ResourceLocation, StepResult, N_ACTIONS};

/// Consumed resource ids before a step, for the monotone-consumption check.
pub fn consumed_ids(env: &GridEnv) -> HashSet<usize> {
    env.resources().iter().filter(|r| r.location == ResourceLocation::Consumed).map(|r| r.id).collect()
}

pub fn random_actions<R: Rng>(n: usize, rng: &mut R) -> Vec<Action> {
    (0..n).map(|_| Action::ALL[rng.gen_range(0..N_ACTIONS)]).collect()
}

/// Checks every state invariant after a step, recomputed from the public
/// state. Returns one message per violation.
pub fn invariant_violations(env: &GridEnv, consumed_before: &HashSet<usize>, result: &StepResult) -> Vec<String> {
    let cfg = env.config();
    let areas = env.areas();
    let mut bad = Vec::new();

    let rs = env.resources();
    if rs.len() != cfg.n_resources {
        bad.push(format!("resource count {} != {}", rs.len(), cfg.n_resources));
    }
    let (mut ground, mut carried, mut consumed) = (0, 0, 0);
    let mut ground_cells = HashSet::new();
    let mut in_area2 = 0usize;
    for r in rs {
        match r.location {
            ResourceLocation::Ground(c) => {
                ground += 1;
                if !ground_cells.insert(c) {
                    bad.push(format!("two ground resources on {c:?}"));
                }
                if areas.get(c) == Area::Wall {
                    bad.push(format!("resource {} on a wall", r.id));
                }
                if areas.get(c) == Area::Area2 {
                    in_area2 += 1;
                }
            }
            ResourceLocation::Carried(a) => {
                carried += 1;
                if env.agents()[a].cargo != Some(r.id) {
                    bad.push(format!("resource {} carrier mismatch", r.id));
                }
            }
            ResourceLocation::Consumed => consumed += 1,
        }
        if r.target_area != r.rtype.target_area() {
            bad.push(format!("resource {} target area mismatch", r.id));
        }
    }
    if ground + carried + consumed != cfg.n_resources {
        bad.push("resource conservation".into());
    }
    for id in consumed_before {
        if rs[*id].location != ResourceLocation::Consumed {
            bad.push(format!("consumed resource {id} reappeared"));
        }
    }
    if let taskgrid::env::Bottleneck::Limited(b) = cfg.bottleneck {
        if in_area2 > b as usize {
            bad.push(format!("{in_area2} ground resources in area 2 with B={b}"));
        }
    }

    let mut agent_cells = HashSet::new();
    for a in env.agents() {
        if !agent_cells.insert(a.position) {
            bad.push(format!("two agents on {:?}", a.position));
        }
        if areas.get(a.position) == Area::Wall {
            bad.push(format!("agent {} on a wall", a.id));
        }
    }

    for (i, &r) in result.rewards.iter().enumerate() {
        let events: f64 = result.events.iter().filter(|e| e.agent() == i).map(Event::reward).sum();
        if r != cfg.r_step + events {
            bad.push(format!("agent {i} reward {r} != r_step + events {}", cfg.r_step + events));
        }
    }
    let expect_done = env.step_count() >= cfg.max_steps || consumed == cfg.n_resources;
    if result.done != expect_done {
        bad.push(format!("done flag {} at step {}", result.done, env.step_count()));
    }
    bad
}

/// Per-run numbers recomputed by brute force from `summary.json` and the raw
/// `episodes.csv` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub agents: usize,
    /// `None` means unlimited.
    pub bottleneck: Option<u64>,
    pub counts: Vec<(u64, u64)>,
    pub specialization: f64,
    pub fairness: Option<f64>,
}

pub fn oracle_run(dir: &std::path::Path, window: Option<usize>) -> OracleRun {
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let agents = summary["run"]["agents"].as_u64().unwrap() as usize;
    let bottleneck = summary["run"]["bottleneck"].as_u64();
    let csv = std::fs::read_to_string(dir.join("episodes.csv")).unwrap();
    let rows: Vec<(usize, usize, u64, u64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    let last = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
    let first = window.map_or(0, |k| last.saturating_sub(k));
    let mut counts = vec![(0u64, 0u64); agents];
    for &(ep, a, t1, t2) in &rows {
        if ep >= first {
            counts[a].0 += t1;
            counts[a].1 += t2;
        }
    }
    let s: Vec<f64> = counts
        .iter()
        .map(|&(t1, t2)| if t1 + t2 == 0 { 0.0 } else { t1.abs_diff(t2) as f64 / (t1 + t2) as f64 })
        .collect();
    let specialization = s.iter().sum::<f64>() / agents as f64;
    let x: Vec<f64> = counts.iter().map(|&(t1, t2)| (t1 + t2) as f64).collect();
    let sum: f64 = x.iter().sum();
    let fairness = (sum > 0.0).then(|| sum * sum / (agents as f64 * x.iter().map(|v| v * v).sum::<f64>()));
    OracleRun { agents, bottleneck, counts, specialization, fairness }
}

/// `(agents, bottleneck, mean_spec, std_spec, mean_fairness, n_seeds)` per
/// group, sorted by agents then bottleneck (unlimited last).
pub type OracleRow = (usize, Option<u64>, f64, f64, Option<f64>, usize);

pub fn oracle_table(runs: &[OracleRun]) -> Vec<OracleRow> {
    let mut keys: Vec<(usize, Option<u64>)> = runs.iter().map(|r| (r.agents, r.bottleneck)).collect();
    keys.sort_by_key(|&(a, b)| (a, b.unwrap_or(u64::MAX)));
    keys.dedup();
    keys.into_iter()
        .map(|(a, b)| {
            let members: Vec<&OracleRun> = runs.iter().filter(|r| r.agents == a && r.bottleneck == b).collect();
            let n = members.len();
            let mean = members.iter().map(|r| r.specialization).sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (members.iter().map(|r| (r.specialization - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            let fair: Vec<f64> = members.iter().filter_map(|r| r.fairness).collect();
            let mean_fair = (!fair.is_empty()).then(|| fair.iter().sum::<f64>() / fair.len() as f64);
            (a, b, mean, std, mean_fair, n)
        })
        .collect()
}

/// Parses the comparison CSV back into rows.
pub fn parse_table(text: &str) -> Vec<OracleRow> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("agents,bottleneck,mean_spec,std_spec,mean_fairness,n_seeds"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let fair = if f[4].is_empty() { None } else { Some(f[4].parse().unwrap()) };
            let b = if f[1] == "unlimited" { None } else { Some(f[1].parse().unwrap()) };
            (f[0].parse().unwrap(), b, f[2].parse().unwrap(), f[3].parse().unwrap(), fair, f[5].parse().unwrap())
        })
        .collect()
}
