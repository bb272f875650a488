use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Purpose of a random stream. Each `(master_seed, label)` pair hashes to an
/// independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Env,
    Init(usize),
    Action(usize),
    Sampler(usize),
}

impl StreamLabel {
    fn tag(self) -> (&'static [u8], u64) {
        match self {
            StreamLabel::Env => (b"env", 0),
            StreamLabel::Init(a) => (b"init", a as u64),
            StreamLabel::Action(a) => (b"action", a as u64),
            StreamLabel::Sampler(a) => (b"sampler", a as u64),
        }
    }
}

pub fn derive_stream(master_seed: u64, label: StreamLabel) -> ChaCha8Rng {
    let (name, agent) = label.tag();
    let mut h = Sha256::new();
    h.update(b"taskgrid-stream-v1");
    h.update(master_seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name);
    h.update(agent.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Every stream a run needs.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub env: ChaCha8Rng,
    pub init: Vec<ChaCha8Rng>,
    pub action: Vec<ChaCha8Rng>,
    pub sampler: Vec<ChaCha8Rng>,
}

pub fn derive_rngs(master_seed: u64, n_agents: usize) -> RunRngs {
    let per_agent =
        |f: fn(usize) -> StreamLabel| (0..n_agents).map(|a| derive_stream(master_seed, f(a))).collect::<Vec<_>>();
    RunRngs {
        env: derive_stream(master_seed, StreamLabel::Env),
        init: per_agent(StreamLabel::Init),
        action: per_agent(StreamLabel::Action),
        sampler: per_agent(StreamLabel::Sampler),
    }
}
