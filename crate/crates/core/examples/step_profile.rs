//! Per-phase timing of an A2C training loop.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taskgrid::a2c::{A2cAgent, A2cConfig};
use taskgrid::env::{EnvConfig, GridEnv};
use taskgrid::nn::TrunkSpec;

fn main() {
    let cfg = EnvConfig { width: 6, height: 6, n_agents: 1, n_resources: 1, ..Default::default() };
    let mut env = GridEnv::new(cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut agent = A2cAgent::<f32>::new(A2cConfig::default(), TrunkSpec::default(), &mut rng).unwrap();
    let mut obs = env.reset().unwrap();
    let (mut t_act, mut t_env, mut t_obs) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let n = 20_000;
    for _ in 0..n {
        let t = Instant::now();
        let a = agent.act(&obs[0], &mut rng).unwrap();
        t_act += t.elapsed();
        let t = Instant::now();
        let (next, res) = env.step(&[a.action]).unwrap();
        t_env += t.elapsed();
        let t = Instant::now();
        agent.observe(res.rewards[0], &next[0], res.terminated, res.done && !res.terminated).unwrap();
        t_obs += t.elapsed();
        obs = if res.done { env.reset().unwrap() } else { next };
    }
    let us = |d: Duration| d.as_secs_f64() * 1e6 / n as f64;
    println!("act {:.1} us, env {:.1} us, observe {:.1} us", us(t_act), us(t_env), us(t_obs));
}
