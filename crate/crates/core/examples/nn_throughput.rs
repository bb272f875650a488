//! Forward/backward throughput of the default network.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taskgrid::env::{EnvConfig, GridEnv};
use taskgrid::nn::{HeadGrad, HeadKind, Network, NetworkSpec, TrunkSpec};

fn main() {
    let mut env = GridEnv::new(EnvConfig::default(), 1).unwrap();
    let obs = env.reset().unwrap().remove(0);
    let spec = NetworkSpec::new(TrunkSpec::default(), HeadKind::ActorCritic);
    let net = Network::<f32>::init(spec, &mut ChaCha8Rng::seed_from_u64(1));
    let mut grads = net.new_gradients();
    let n: usize = std::env::var("N").ok().and_then(|v| v.parse().ok()).unwrap_or(20_000);
    let t = Instant::now();
    let mut acc = 0.0f32;
    for _ in 0..n {
        acc += net.evaluate(&obs).unwrap().scalar;
    }
    let fwd = t.elapsed().as_secs_f64() / n as f64;
    let t = Instant::now();
    let g = HeadGrad { scalar: 1.0, vector: [0.1; 5] };
    for _ in 0..n {
        let (_, cache) = net.forward(&obs).unwrap();
        net.backward(&cache, &g, &mut grads).unwrap();
    }
    let fb = t.elapsed().as_secs_f64() / n as f64;
    println!("forward {:.1} us, forward+backward {:.1} us ({acc})", fwd * 1e6, fb * 1e6);
}
