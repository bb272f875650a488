use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::a2c::A2cConfig;
use crate::dqn::DqnConfig;
use crate::env::{Area, AreaMap, Bottleneck, EnvConfig};
use crate::nn::{HeadKind, NetworkSpec, TrunkSpec};

use super::tracker::ConvergenceConfig;
use super::HarnessError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dddqn,
    #[default]
    A2c,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Dddqn => "dddqn",
            Algo::A2c => "a2c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub agents: Vec<usize>,
    pub bottlenecks: Vec<Bottleneck>,
    pub seeds: Vec<u64>,
}

/// Everything needed to reproduce a run or a sweep. Missing keys take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub train_episodes: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Episodes whose frames are written to `frames.jsonl`.
    pub replay_episodes: Vec<usize>,
    pub env: EnvConfig,
    pub network: TrunkSpec,
    pub dqn: DqnConfig,
    pub a2c: A2cConfig,
    pub convergence: ConvergenceConfig,
    /// When absent, a single run at `env.n_agents`, `env.bottleneck`, `master_seed`.
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algo: Algo::default(),
            train_episodes: 1000,
            master_seed: 0,
            output_dir: PathBuf::from("runs"),
            replay_episodes: Vec::new(),
            env: EnvConfig::default(),
            network: TrunkSpec::default(),
            dqn: DqnConfig::default(),
            a2c: A2cConfig::default(),
            convergence: ConvergenceConfig::default(),
            sweep: None,
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunPoint {
    pub agents: usize,
    pub bottleneck: Bottleneck,
    pub seed: u64,
}

impl RunPoint {
    pub fn dir_name(&self) -> String {
        format!("agents{}_bneck{}_seed{}", self.agents, self.bottleneck.label(), self.seed)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn sweep_axes(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_else(|| SweepConfig {
            agents: vec![self.env.n_agents],
            bottlenecks: vec![self.env.bottleneck],
            seeds: vec![self.master_seed],
        })
    }

    /// Cartesian product, agents outermost and seeds innermost.
    pub fn points(&self) -> Vec<RunPoint> {
        let s = self.sweep_axes();
        let mut out = Vec::new();
        for &agents in &s.agents {
            for &bottleneck in &s.bottlenecks {
                for &seed in &s.seeds {
                    out.push(RunPoint { agents, bottleneck, seed });
                }
            }
        }
        out
    }

    pub fn env_for(&self, p: RunPoint) -> EnvConfig {
        EnvConfig { n_agents: p.agents, bottleneck: p.bottleneck, ..self.env.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.train_episodes == 0 {
            return bad("train_episodes must be ≥ 1".into());
        }
        let s = self.sweep_axes();
        if s.agents.is_empty() || s.bottlenecks.is_empty() || s.seeds.is_empty() {
            return bad("sweep axes must be non-empty".into());
        }
        if s.seeds.iter().collect::<HashSet<_>>().len() != s.seeds.len() {
            return bad("sweep seeds must be distinct".into());
        }
        for p in self.points() {
            let env = self.env_for(p);
            env.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            let area1 = AreaMap::vertical_bands(env.width, env.height).cells_in(Area::Area1).len();
            if area1 < env.n_resources {
                return bad(format!("n_resources = {} exceeds the {area1} cells of area 1", env.n_resources));
            }
        }
        let head = match self.algo {
            Algo::Dddqn => HeadKind::Dueling,
            Algo::A2c => HeadKind::ActorCritic,
        };
        NetworkSpec::new(self.network, head).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match self.algo {
            Algo::Dddqn => self.dqn.validate().map_err(|e| HarnessError::Config(e.to_string())),
            Algo::A2c => self.a2c.validate().map_err(|e| HarnessError::Config(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.points().len(), 1);
    }

    #[test]
    fn dotted_sections_parse() {
        let c = ExperimentConfig::from_toml_str(
            r#"
algo = "dddqn"
train_episodes = 20
[env]
width = 10
bottleneck = "unlimited"
[dqn]
batch = 16
[sweep]
agents = [2, 6]
bottlenecks = [2, "unlimited"]
seeds = [1, 2, 3, 4, 5]
"#,
        )
        .unwrap();
        assert_eq!(c.algo, Algo::Dddqn);
        assert_eq!(c.env.width, 10);
        assert_eq!(c.dqn.batch, 16);
        assert_eq!(c.points().len(), 20);
        assert_eq!(c.points()[0].dir_name(), "agents2_bneck2_seed1");
        assert_eq!(c.points()[19].dir_name(), "agents6_bneckunlimited_seed5");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("colour = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[env]\nwidht = 9").is_err());
        assert!(ExperimentConfig::from_toml_str("[a2c]\nnstep = 9").is_err());
    }

    #[test]
    fn sweep_rules() {
        let e = |s: &str| ExperimentConfig::from_toml_str(s).is_err();
        assert!(e("[sweep]\nagents = []\nbottlenecks = [2]\nseeds = [1]"));
        assert!(e("[sweep]\nagents = [2]\nbottlenecks = [2]\nseeds = [1, 1]"));
        assert!(e("[sweep]\nagents = [99]\nbottlenecks = [2]\nseeds = [1]"));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig {
            sweep: Some(SweepConfig { agents: vec![2], bottlenecks: vec![Bottleneck::Limited(2)], seeds: vec![4] }),
            ..Default::default()
        };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }
}
