//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//!
//! Runs as a plain binary so the lines are always shown. Pass criterion
//! numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 3 5`.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use taskgrid::a2c::{entropy, sample_action, A2cAgent, A2cConfig};
use taskgrid::dqn::{dueling_aggregate, huber, q_values, td_targets, DqnConfig, PrioritizedBuffer, Transition};
use taskgrid::env::{Bottleneck, EnvConfig, GridEnv, Observation, N_ACTIONS};
use taskgrid::harness::{run_experiment, run_single, Algo, ExperimentConfig, RunPoint, SweepConfig};
use taskgrid::metrics::{analyze, population_specialization, specialization, TaskCounts};
use taskgrid::nn::{gradient_check, gradient_check_with_fault, HeadKind, LayerId, Network, NetworkSpec, TrunkSpec};

use common::{consumed_ids, invariant_violations, oracle_run, oracle_table, random_actions, OracleRow};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn chi_square_p(observed: &[u64], expected_prob: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_prob)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    let mut o = Observation::zeros();
    o.grid.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
    o.scalars.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
    o
}

fn small_trunk() -> TrunkSpec {
    TrunkSpec { conv1_channels: 4, conv2_channels: 6, hidden: 16 }
}

fn c1_env_invariants() -> Outcome {
    let cfg = EnvConfig { n_agents: 6, bottleneck: Bottleneck::Limited(2), ..Default::default() };
    let start = Instant::now();
    let mut steps = 0u64;
    let mut violations = Vec::new();
    let seeds = 20u64;
    for seed in 0..seeds {
        let mut env = GridEnv::new(cfg.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut seed_steps = 0;
        while seed_steps < 5_000 {
            env.reset().unwrap();
            while !env.is_done() {
                let before = consumed_ids(&env);
                let (_, result) = env.step(&random_actions(cfg.n_agents, &mut rng)).unwrap();
                violations.extend(invariant_violations(&env, &before, &result));
                seed_steps += 1;
            }
        }
        steps += seed_steps;
    }
    let elapsed = start.elapsed();
    let pass = violations.is_empty() && steps >= 100_000 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!("{steps} steps over {seeds} seeds, {} violations, {:.1} s", violations.len(), elapsed.as_secs_f64()),
    )
}

fn c2_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for algo in [Algo::A2c, Algo::Dddqn] {
        let cfg = ExperimentConfig {
            algo,
            train_episodes: 3,
            master_seed: 17,
            replay_episodes: vec![0, 1, 2],
            env: EnvConfig { n_agents: 2, max_steps: 200, ..Default::default() },
            ..Default::default()
        };
        let point = cfg.points()[0];
        let (a, b) = (tmp.path().join(format!("{}_a", algo.name())), tmp.path().join(format!("{}_b", algo.name())));
        run_single(&cfg, point, &a).unwrap();
        run_single(&cfg, point, &b).unwrap();
        for f in ["episodes.csv", "frames.jsonl"] {
            let same = std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
            pass &= same;
            details.push(format!("{} {f} {}", algo.name(), if same { "identical" } else { "DIFFERS" }));
        }
    }
    outcome(pass, details.join(", "))
}

fn c3_gradient_check() -> Outcome {
    let trunk = TrunkSpec::default();
    let report = gradient_check(&trunk, 0, 1e-4);
    let heads_covered = report.params.iter().any(|p| p.name.starts_with("dueling/"))
        && report.params.iter().any(|p| p.name.starts_with("actor_critic/"));
    let mut undetected = Vec::new();
    for layer in LayerId::ALL {
        if gradient_check_with_fault(&trunk, 0, 1e-4, Some(layer)).passed() {
            undetected.push(format!("{layer:?}"));
        }
    }
    let pass = report.passed() && heads_covered && report.params.len() == 20 && undetected.is_empty();
    outcome(
        pass,
        format!(
            "max rel error {:.2e} over {} tensors; sign-flip faults detected in {}/5 layers{}",
            report.max_rel_error(),
            report.params.len(),
            5 - undetected.len(),
            if undetected.is_empty() { String::new() } else { format!(" (missed {})", undetected.join(",")) }
        ),
    )
}

fn c4_dueling_double() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = NetworkSpec::new(small_trunk(), HeadKind::Dueling);
    let net = Network::<f64>::init(spec, &mut rng);
    let mut worst_shift = 0.0f64;
    for _ in 0..50 {
        let obs = random_obs(&mut rng);
        let c: f64 = rng.gen_range(-100.0..100.0);
        let mut shifted = net.clone();
        let bias = shifted.params_mut().tensors.iter_mut().find(|t| t.name == "advantage.bias").unwrap();
        bias.data.iter_mut().for_each(|b| *b += c);
        let (q0, q1) = (q_values(&net, &obs).unwrap(), q_values(&shifted, &obs).unwrap());
        for (x, y) in q0.iter().zip(&q1) {
            worst_shift = worst_shift.max((x - y).abs());
        }
        let v: f64 = rng.gen_range(-5.0..5.0);
        let adv: [f64; N_ACTIONS] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
        let q_a = dueling_aggregate(v, &adv);
        let q_b = dueling_aggregate(v, &adv.map(|a| a + c));
        for (x, y) in q_a.iter().zip(&q_b) {
            worst_shift = worst_shift.max((x - y).abs());
        }
    }

    let gamma = 0.99;
    let transitions: Vec<Transition> = (0..16)
        .map(|i| Transition {
            obs: random_obs(&mut rng),
            action: i % N_ACTIONS,
            reward: rng.gen_range(-1.0..1.0),
            next_obs: random_obs(&mut rng),
            terminal: i % 5 == 0,
        })
        .collect();
    let refs: Vec<&Transition> = transitions.iter().collect();
    let targets = td_targets(&refs, &net, &net, gamma).unwrap();
    let mut worst_target = 0.0f64;
    for (t, y) in transitions.iter().zip(&targets) {
        let max_q = q_values(&net, &t.next_obs).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        let want = if t.terminal { t.reward } else { t.reward + gamma * max_q };
        worst_target = worst_target.max((y - want).abs());
    }
    let (h1, h2) = (huber(0.5, 1.0), huber(2.0, 1.0));
    let (h1n, h2n) = (huber(-0.5, 1.0), huber(-2.0, 1.0));
    let huber_ok = (h1 - 0.125).abs() < 1e-12 && (h2 - 1.5).abs() < 1e-12 && h1 == h1n && h2 == h2n;
    let pass = worst_shift < 1e-6 && worst_target < 1e-12 && huber_ok;
    outcome(
        pass,
        format!(
            "max Q change under shift {worst_shift:.1e}; double vs max target {worst_target:.1e}; huber {h1}, {h2}"
        ),
    )
}

fn c5_per_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alpha = DqnConfig::default().per_alpha;
    let mut buf = PrioritizedBuffer::new(64, alpha);
    let priorities: Vec<f64> = (0..64).map(|_| rng.gen_range(0.01..2.0)).collect();
    for i in 0..64 {
        buf.push(i);
    }
    let idx: Vec<usize> = (0..64).collect();
    buf.update_priorities(&idx, &priorities);
    let mass: Vec<f64> = priorities.iter().map(|p| p.powf(alpha)).collect();
    let total: f64 = mass.iter().sum();
    let probs: Vec<f64> = mass.iter().map(|m| m / total).collect();
    let mut counts = vec![0u64; 64];
    let batch = 32;
    let draws = 100_000;
    for _ in 0..draws / batch {
        for i in buf.sample(batch, 0.4, &mut rng).unwrap().indices {
            counts[i] += 1;
        }
    }
    let p_value = chi_square_p(&counts, &probs);

    let mut tree_buf = PrioritizedBuffer::new(500, alpha);
    for i in 0..10_000 {
        if tree_buf.is_empty() || rng.gen_bool(0.3) {
            tree_buf.push(i);
        } else {
            let k = rng.gen_range(0..tree_buf.len());
            tree_buf.update_priorities(&[k], &[rng.gen_range(1e-3..50.0)]);
        }
    }
    let flat: f64 = (0..tree_buf.len()).map(|i| tree_buf.priority(i).powf(alpha)).sum();
    let root_err = (tree_buf.total_mass() - flat).abs() / flat;

    let mut uniform = PrioritizedBuffer::new(64, alpha);
    for i in 0..64 {
        uniform.push(i);
    }
    uniform.update_priorities(&idx, &[0.7; 64]);
    let w = uniform.sample(32, 1.0, &mut rng).unwrap().weights;
    let weights_ok = w.iter().all(|&x| x == 1.0);

    let pass = p_value > 0.01 && root_err < 1e-6 && weights_ok;
    outcome(
        pass,
        format!(
            "chi2 p = {p_value:.3} over {} draws; root rel error {root_err:.1e}; uniform IS weights all 1: {weights_ok}",
            counts.iter().sum::<u64>()
        ),
    )
}

fn c6_exploration() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let small = EnvConfig { width: 6, height: 6, n_agents: 3, n_resources: 2, max_steps: 20, ..Default::default() };
    let episodes = 30;
    let dqn = DqnConfig { batch: 8, buffer_capacity: 256, ..Default::default() };
    let cfg = ExperimentConfig {
        algo: Algo::Dddqn,
        train_episodes: episodes,
        env: small.clone(),
        network: small_trunk(),
        dqn: dqn.clone(),
        ..Default::default()
    };
    let dir = tmp.path().join("dqn");
    run_single(&cfg, cfg.points()[0], &dir).unwrap();
    let learning = std::fs::read_to_string(dir.join("learning.csv")).unwrap();
    let mut lines = learning.lines();
    let dqn_header_ok = lines.next().unwrap().split(',').nth(2) == Some("epsilon");
    let horizon = dqn.eps_decay_fraction * episodes as f64;
    let schedule = |ep: usize| {
        let e = ep as f64;
        if e >= horizon {
            dqn.eps_end
        } else {
            dqn.eps_start + (dqn.eps_end - dqn.eps_start) * (e / horizon)
        }
    };
    let mut eps_ok = dqn_header_ok;
    let mut per_episode = vec![Vec::new(); episodes];
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let ep: usize = f[0].parse().unwrap();
        let eps: f64 = f[2].parse().unwrap();
        eps_ok &= eps == schedule(ep);
        per_episode[ep].push(eps);
    }
    eps_ok &= per_episode.iter().all(|v| v.len() == 3 && v.iter().all(|&e| e == v[0]));
    let decay_end = horizon.ceil() as usize;
    eps_ok &= (1..decay_end).all(|ep| per_episode[ep][0] < per_episode[ep - 1][0]);

    let cfg = ExperimentConfig {
        algo: Algo::A2c,
        train_episodes: 5,
        env: small,
        network: small_trunk(),
        ..Default::default()
    };
    let dir = tmp.path().join("a2c");
    run_single(&cfg, cfg.points()[0], &dir).unwrap();
    let learning = std::fs::read_to_string(dir.join("learning.csv")).unwrap();
    let header = learning.lines().next().unwrap();
    let episodes_csv = std::fs::read_to_string(dir.join("episodes.csv")).unwrap();
    let ln5 = (N_ACTIONS as f64).ln();
    let entropy_in_range = |text: &str, col: usize| {
        text.lines().skip(1).all(|l| {
            let h: f64 = l.split(',').nth(col).unwrap().parse().unwrap();
            (0.0..=ln5).contains(&h)
        })
    };
    let a2c_ok = header.split(',').nth(2) == Some("entropy")
        && !header.contains("epsilon")
        && entropy_in_range(&learning, 2)
        && entropy_in_range(&episodes_csv, 5);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0u64; N_ACTIONS];
    for _ in 0..100_000 {
        counts[sample_action(&[0.2; N_ACTIONS], &mut rng)] += 1;
    }
    let p_sampler = chi_square_p(&counts, &[0.2; N_ACTIONS]);
    let spec = NetworkSpec::new(small_trunk(), HeadKind::ActorCritic);
    let mut agent = A2cAgent::from_network(A2cConfig::default(), Network::<f32>::zeros(spec)).unwrap();
    let obs = random_obs(&mut rng);
    let mut counts = [0u64; N_ACTIONS];
    for _ in 0..100_000 {
        counts[agent.act(&obs, &mut rng).unwrap().action.index()] += 1;
    }
    let p_agent = chi_square_p(&counts, &[0.2; N_ACTIONS]);

    let pass = eps_ok && a2c_ok && p_sampler > 0.01 && p_agent > 0.01;
    outcome(
        pass,
        format!(
            "DQN eps column linear & shared: {eps_ok}; A2C entropy column, no eps: {a2c_ok}; uniform chi2 p = {p_sampler:.3} (sampler), {p_agent:.3} (agent)"
        ),
    )
}

fn c7_entropy_dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = NetworkSpec::new(small_trunk(), HeadKind::ActorCritic);
    let mut net = Network::<f64>::init(spec, &mut rng);
    // start well away from uniform
    let w = net.params_mut().tensors.iter_mut().find(|t| t.name == "policy.weight").unwrap();
    w.data.iter_mut().for_each(|v| *v *= 4.0);
    let cfg = A2cConfig { entropy_coef: 0.01, ..Default::default() };
    let mut agent = A2cAgent::from_network(cfg, net).unwrap();
    let batch: Vec<Observation> = (0..8).map(|_| random_obs(&mut rng)).collect();
    let actions: Vec<usize> = (0..batch.len()).map(|i| i % N_ACTIONS).collect();
    let mean_entropy = |agent: &A2cAgent<f64>| {
        batch.iter().map(|o| entropy(&agent.policy(o).unwrap().0)).sum::<f64>() / batch.len() as f64
    };
    let ln5 = (N_ACTIONS as f64).ln();
    let start = mean_entropy(&agent);
    let mut reached = None;
    for update in 1..=500 {
        let values: Vec<f64> = batch.iter().map(|o| agent.policy(o).unwrap().1).collect();
        agent.update(&batch, &actions, &values, &vec![0.0; batch.len()]).unwrap();
        if ln5 - mean_entropy(&agent) < 1e-3 {
            reached = Some(update);
            break;
        }
    }
    let end = mean_entropy(&agent);
    outcome(
        reached.is_some() && start < ln5 - 0.1,
        format!(
            "mean entropy {start:.4} -> {end:.4} (ln 5 = {ln5:.4}); within 1e-3 after {}",
            reached.map_or("more than 500 updates".to_string(), |u| format!("{u} updates"))
        ),
    )
}

fn last_window_tasks(dir: &Path, window: usize) -> f64 {
    let text = std::fs::read_to_string(dir.join("episodes.csv")).unwrap();
    let tasks: Vec<u64> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[3].parse::<u64>().unwrap() + f[4].parse::<u64>().unwrap()
        })
        .collect();
    let tail = &tasks[tasks.len() - window..];
    tail.iter().sum::<u64>() as f64 / window as f64
}

fn c8_learning_sanity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        algo: Algo::A2c,
        train_episodes: 3000,
        env: EnvConfig { width: 6, height: 6, n_agents: 1, n_resources: 1, ..Default::default() },
        ..Default::default()
    };
    let mut good = 0;
    let mut parts = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 1..=5u64 {
        let point = RunPoint { agents: 1, bottleneck: cfg.env.bottleneck, seed };
        let start = Instant::now();
        let dir = tmp.path().join(point.dir_name());
        run_single(&cfg, point, &dir).unwrap();
        slowest = slowest.max(start.elapsed());
        let m = last_window_tasks(&dir, 200);
        good += usize::from(m >= 1.5);
        parts.push(format!("{m:.2}"));
    }
    let pass = good >= 4 && slowest < Duration::from_secs(15 * 60);
    outcome(
        pass,
        format!(
            "last-200 mean tasks per seed [{}]; {good}/5 seeds >= 1.5; slowest seed {:.0} s",
            parts.join(", "),
            slowest.as_secs_f64()
        ),
    )
}

fn c9_specialization_trend(root: &Path) -> (Outcome, Vec<PathBuf>) {
    let cfg = ExperimentConfig {
        algo: Algo::A2c,
        train_episodes: 1000,
        output_dir: root.to_path_buf(),
        env: EnvConfig { width: 8, height: 8, ..Default::default() },
        sweep: Some(SweepConfig {
            agents: vec![2, 6],
            bottlenecks: vec![Bottleneck::Limited(2)],
            seeds: vec![1, 2, 3, 4, 5],
        }),
        ..Default::default()
    };
    let start = Instant::now();
    let outcomes = run_experiment(&cfg).unwrap();
    let spec_of = |agents: usize, seed: u64| {
        let o = outcomes.iter().find(|o| o.point.agents == agents && o.point.seed == seed).unwrap();
        o.result.as_ref().unwrap().population.mean_specialization
    };
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=5 {
        let (two, six) = (spec_of(2, seed), spec_of(6, seed));
        wins += usize::from(six > two);
        pairs.push(format!("{two:.3}/{six:.3}"));
    }
    let dirs = outcomes.iter().map(|o| o.dir.clone()).collect();
    (
        outcome(
            wins >= 4,
            format!(
                "mean specialization 2 vs 6 agents per seed [{}]; 6 > 2 in {wins}/5; {:.0} s",
                pairs.join(", "),
                start.elapsed().as_secs_f64()
            ),
        ),
        dirs,
    )
}

fn c10_metrics_oracle(runs: &[PathBuf]) -> Outcome {
    let examples = specialization(TaskCounts::new(10, 10)) == 0.0
        && specialization(TaskCounts::new(5, 0)) == 1.0
        && specialization(TaskCounts::new(3, 1)) == 0.5
        && population_specialization(&[TaskCounts::new(3, 1), TaskCounts::new(1, 3)]) == Ok(0.5);

    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = runs.to_vec();
    if dirs.is_empty() {
        let cfg = ExperimentConfig {
            train_episodes: 5,
            output_dir: tmp.path().to_path_buf(),
            env: EnvConfig { width: 6, height: 6, n_resources: 2, max_steps: 100, ..Default::default() },
            network: small_trunk(),
            sweep: Some(SweepConfig {
                agents: vec![1, 3],
                bottlenecks: vec![Bottleneck::Limited(1), Bottleneck::Unlimited],
                seeds: vec![1, 2, 3],
            }),
            ..Default::default()
        };
        dirs = run_experiment(&cfg).unwrap().into_iter().map(|o| o.dir).collect();
    }
    let mut mismatches = 0;
    for window in [None, Some(100)] {
        let (stats, rows, errors) = analyze(&dirs, window);
        mismatches += errors.len();
        let oracle: Vec<_> = dirs.iter().map(|d| oracle_run(d, window)).collect();
        for (s, o) in stats.iter().zip(&oracle) {
            let counts: Vec<(u64, u64)> = s.counts.iter().map(|c| (c.t1, c.t2)).collect();
            mismatches += usize::from(
                counts != o.counts || s.mean_specialization != o.specialization || s.fairness != o.fairness,
            );
        }
        let got: Vec<OracleRow> = rows
            .iter()
            .map(|r| {
                let b = match r.bottleneck {
                    Bottleneck::Limited(b) => Some(b as u64),
                    Bottleneck::Unlimited => None,
                };
                (r.agents, b, r.mean_spec, r.std_spec, r.mean_fairness, r.n_seeds)
            })
            .collect();
        mismatches += usize::from(got != oracle_table(&oracle));
        if window.is_none() {
            for (d, o) in dirs.iter().zip(&oracle) {
                let s: serde_json::Value =
                    serde_json::from_str(&std::fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
                let spec = s["population"]["mean_specialization"].as_f64().unwrap();
                let fair = s["population"]["fairness"].as_f64();
                mismatches += usize::from(spec != o.specialization || fair != o.fairness);
            }
        }
    }
    outcome(
        examples && mismatches == 0,
        format!("S examples ok: {examples}; {} runs recomputed, {mismatches} mismatches", dirs.len()),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let report = |n: u32, o: &Outcome| {
        println!("criterion {n:>2}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let runs_root = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    let checks: [(u32, fn() -> Outcome); 8] = [
        (1, c1_env_invariants),
        (2, c2_determinism),
        (3, c3_gradient_check),
        (4, c4_dueling_double),
        (5, c5_per_statistics),
        (6, c6_exploration),
        (7, c7_entropy_dynamics),
        (8, c8_learning_sanity),
    ];
    for (n, check) in checks {
        if wanted(n) {
            let o = check();
            report(n, &o);
            if !o.pass {
                failed.push(n);
            }
        }
    }
    let mut sweep_dirs = Vec::new();
    if wanted(9) {
        let (o, dirs) = c9_specialization_trend(runs_root.path());
        report(9, &o);
        if !o.pass {
            failed.push(9);
        }
        sweep_dirs = dirs;
    }
    if wanted(10) {
        let o = c10_metrics_oracle(&sweep_dirs);
        report(10, &o);
        if !o.pass {
            failed.push(10);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: FAILED criteria {failed:?}");
        std::process::exit(1);
    }
}
