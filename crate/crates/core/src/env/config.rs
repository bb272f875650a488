use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::EnvError;

/// Maximum number of ground resources allowed in area 2 at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Bottleneck {
    Limited(u32),
    #[default]
    Unlimited,
}

impl Bottleneck {
    pub fn allows(self, ground_in_area2: usize) -> bool {
        match self {
            Bottleneck::Limited(b) => ground_in_area2 < b as usize,
            Bottleneck::Unlimited => true,
        }
    }

    /// Token used in run directory names and CSV tables.
    pub fn label(self) -> String {
        match self {
            Bottleneck::Limited(b) => b.to_string(),
            Bottleneck::Unlimited => "unlimited".to_string(),
        }
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        if s == "unlimited" {
            Some(Bottleneck::Unlimited)
        } else {
            s.parse().ok().map(Bottleneck::Limited)
        }
    }
}

impl fmt::Display for Bottleneck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Bottleneck {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bottleneck::Limited(b) => s.serialize_u32(*b),
            Bottleneck::Unlimited => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for Bottleneck {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct BottleneckVisitor;

        impl Visitor<'_> for BottleneckVisitor {
            type Value = Bottleneck;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or \"unlimited\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Bottleneck, E> {
                u32::try_from(v)
                    .map(Bottleneck::Limited)
                    .map_err(|_| E::custom(format!("bottleneck out of range: {v}")))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Bottleneck, E> {
                u32::try_from(v)
                    .map(Bottleneck::Limited)
                    .map_err(|_| E::custom(format!("bottleneck out of range: {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bottleneck, E> {
                Bottleneck::parse_label(v).ok_or_else(|| E::custom(format!("invalid bottleneck {v:?}")))
            }
        }

        d.deserialize_any(BottleneckVisitor)
    }
}

/// Static parameters of the grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    pub n_resources: usize,
    pub bottleneck: Bottleneck,
    pub max_steps: u64,
    pub obs_radius: usize,
    pub decay_v0: f64,
    pub decay_rate: f64,
    pub decay_min: f64,
    pub r_step: f64,
    pub r_useless: f64,
    pub r_pickup: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            n_agents: 2,
            n_resources: 4,
            bottleneck: Bottleneck::Unlimited,
            max_steps: 500,
            obs_radius: super::OBS_RADIUS,
            decay_v0: 1.0,
            decay_rate: 0.001,
            decay_min: 0.1,
            r_step: -0.01,
            r_useless: -0.05,
            r_pickup: 0.1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |field: &'static str, rule: &'static str| Err(EnvError::InvalidConfig { field, rule });
        if self.width < 6 {
            return bad("width", "width ≥ 6");
        }
        if self.height < 3 {
            return bad("height", "height ≥ 3");
        }
        if self.n_agents == 0 {
            return bad("n_agents", "n_agents ≥ 1");
        }
        if self.n_agents > 26 {
            return bad("n_agents", "n_agents ≤ 26");
        }
        if self.n_agents > (self.width - 2) * (self.height - 2) {
            return bad("n_agents", "n_agents ≤ number of non-wall cells");
        }
        if self.obs_radius != super::OBS_RADIUS {
            return bad("obs_radius", "obs_radius = 3 (7×7 window)");
        }
        if self.max_steps == 0 {
            return bad("max_steps", "max_steps ≥ 1");
        }
        if let Bottleneck::Limited(0) = self.bottleneck {
            return bad("bottleneck", "bottleneck ≥ 1 when finite");
        }
        let finite = [self.decay_v0, self.decay_rate, self.decay_min, self.r_step, self.r_useless, self.r_pickup];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("rewards", "reward parameters must be finite");
        }
        if self.decay_v0 <= 0.0 {
            return bad("decay_v0", "decay_v0 > 0");
        }
        if self.decay_rate < 0.0 {
            return bad("decay_rate", "decay_rate ≥ 0");
        }
        if self.decay_min > self.decay_v0 {
            return bad("decay_min", "decay_min ≤ decay_v0");
        }
        Ok(())
    }
}
