//! Snapshot records for replay and debugging, one JSON object per line.

use serde::{Deserialize, Serialize};

use super::{Direction, GridEnv, ResourceLocation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFrame {
    pub id: usize,
    pub x: usize,
    pub y: usize,
    pub dir: Direction,
    pub cargo: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceState {
    Ground,
    Carried,
    Consumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceFrame {
    pub id: usize,
    #[serde(rename = "type")]
    pub rtype: u8,
    pub state: ResourceState,
    pub x: Option<usize>,
    pub y: Option<usize>,
    pub value: Option<f64>,
}

/// Grid dimensions are carried along so a frame can be rendered on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u64,
    pub width: usize,
    pub height: usize,
    pub agents: Vec<AgentFrame>,
    pub resources: Vec<ResourceFrame>,
    pub area2_count: usize,
}

impl Frame {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

pub(super) fn render(env: &GridEnv) -> Frame {
    let agents = env
        .agents()
        .iter()
        .map(|a| AgentFrame { id: a.id, x: a.position.x, y: a.position.y, dir: a.orientation, cargo: a.cargo })
        .collect();
    let resources = env
        .resources()
        .iter()
        .map(|r| {
            let (state, cell) = match r.location {
                ResourceLocation::Ground(c) => (ResourceState::Ground, Some(c)),
                ResourceLocation::Carried(a) => (ResourceState::Carried, Some(env.agents()[a].position)),
                ResourceLocation::Consumed => (ResourceState::Consumed, None),
            };
            let value = (state != ResourceState::Consumed).then(|| r.value_at(env.step_count(), env.config()));
            ResourceFrame {
                id: r.id,
                rtype: r.rtype.number(),
                state,
                x: cell.map(|c| c.x),
                y: cell.map(|c| c.y),
                value,
            }
        })
        .collect();
    Frame {
        step: env.step_count(),
        width: env.config().width,
        height: env.config().height,
        agents,
        resources,
        area2_count: env.area2_ground_count(),
    }
}
