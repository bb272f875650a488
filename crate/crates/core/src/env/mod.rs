//! Multitask grid world.
//!
//! Resources spawn in area 1. Carrying a type-1 resource into area 2 completes
//! Task 1 and turns it into a type-2 resource targeting area 3; carrying that
//! into area 3 completes Task 2 and consumes it. Completion rewards decay
//! linearly with the time since the resource's current task was assigned.
//! The number of ground resources in area 2 can be capped (the bottleneck).

mod config;
mod frame;
mod observation;

pub use config::{Bottleneck, EnvConfig};
pub use frame::{AgentFrame, Frame, ResourceFrame, ResourceState};
pub use observation::{Observation, OBS_CELLS, OBS_CHANNELS, OBS_RADIUS, OBS_SCALARS, OBS_SIDE};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_ACTIONS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid config field `{field}`: {rule}")]
    InvalidConfig { field: &'static str, rule: &'static str },
    #[error("area 1 has {free} free cells but {requested} resources were requested")]
    NotEnoughSpawnCells { free: usize, requested: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("episode is over; call reset first")]
    EpisodeDone,
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Area {
    Wall,
    Area1,
    Area2,
    Area3,
}

impl Area {
    /// Scalar code used in the observation's area channel.
    pub fn code(self) -> f32 {
        match self {
            Area::Wall => 0.0,
            Area::Area1 => 1.0 / 3.0,
            Area::Area2 => 2.0 / 3.0,
            Area::Area3 => 1.0,
        }
    }

    pub fn digit(self) -> char {
        match self {
            Area::Wall => '#',
            Area::Area1 => '1',
            Area::Area2 => '2',
            Area::Area3 => '3',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Per-cell area labels. Rows are indexed by `y` (north = smaller `y`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaMap {
    width: usize,
    height: usize,
    cells: Vec<Area>,
}

impl AreaMap {
    /// Wall border with three vertical bands inside it. Interior columns are
    /// split as evenly as possible; leftover columns go to the leftmost bands.
    pub fn vertical_bands(width: usize, height: usize) -> Self {
        let interior = width.saturating_sub(2);
        let base = interior / 3;
        let rem = interior % 3;
        let band_widths = [base + usize::from(rem > 0), base + usize::from(rem > 1), base];
        let mut column_area = vec![Area::Wall; width];
        let mut x = 1;
        for (band, &w) in [Area::Area1, Area::Area2, Area::Area3].iter().zip(&band_widths) {
            for _ in 0..w {
                column_area[x] = *band;
                x += 1;
            }
        }
        let mut cells = vec![Area::Wall; width * height];
        for y in 1..height.saturating_sub(1) {
            for x in 1..width - 1 {
                cells[y * width + x] = column_area[x];
            }
        }
        Self { width, height, cells }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, cell: Cell) -> Area {
        self.cells[cell.y * self.width + cell.x]
    }

    /// Area at signed coordinates; out-of-bounds reads as wall.
    pub fn get_signed(&self, x: isize, y: isize) -> Area {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            Area::Wall
        } else {
            self.cells[y as usize * self.width + x as usize]
        }
    }

    pub fn cells_in(&self, area: Area) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[y * self.width + x] == area {
                    out.push(Cell::new(x, y));
                }
            }
        }
        out
    }

    pub fn open_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[y * self.width + x] != Area::Wall {
                    out.push(Cell::new(x, y));
                }
            }
        }
        out
    }

    fn index(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn turn_left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn turn_right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::N => (0, -1),
            Direction::E => (1, 0),
            Direction::S => (0, 1),
            Direction::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    TurnLeft,
    TurnRight,
    MoveForward,
    Take,
    Drop,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::TurnLeft, Action::TurnRight, Action::MoveForward, Action::Take, Action::Drop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Agent {
    pub id: usize,
    pub position: Cell,
    pub orientation: Direction,
    pub cargo: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResourceType {
    One,
    Two,
}

impl ResourceType {
    pub fn target_area(self) -> Area {
        match self {
            ResourceType::One => Area::Area2,
            ResourceType::Two => Area::Area3,
        }
    }

    pub fn task(self) -> Task {
        match self {
            ResourceType::One => Task::One,
            ResourceType::Two => Task::Two,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            ResourceType::One => 1,
            ResourceType::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceLocation {
    Ground(Cell),
    Carried(usize),
    Consumed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    pub id: usize,
    pub rtype: ResourceType,
    pub location: ResourceLocation,
    pub value_initial: f64,
    pub assign_step: u64,
    pub target_area: Area,
    /// Whether the pickup bonus was already paid for the current task stage.
    pub pickup_paid: bool,
}

impl Resource {
    fn fresh(id: usize, cell: Cell, v0: f64) -> Self {
        Self {
            id,
            rtype: ResourceType::One,
            location: ResourceLocation::Ground(cell),
            value_initial: v0,
            assign_step: 0,
            target_area: Area::Area2,
            pickup_paid: false,
        }
    }

    /// Decayed completion reward at step `now`.
    pub fn value_at(&self, now: u64, cfg: &EnvConfig) -> f64 {
        resource_value(self.value_initial, self.assign_step, now, cfg)
    }
}

/// `max(decay_min, v0 - decay_rate * (now - assign_step))`.
pub fn resource_value(value_initial: f64, assign_step: u64, now: u64, cfg: &EnvConfig) -> f64 {
    let elapsed = now.saturating_sub(assign_step) as f64;
    (value_initial - cfg.decay_rate * elapsed).max(cfg.decay_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    TaskCompleted { agent: usize, task: Task, reward: f64 },
    ResourceTaken { agent: usize, resource: usize, reward: f64 },
    UselessAction { agent: usize, action: Action, penalty: f64 },
}

impl Event {
    pub fn agent(&self) -> usize {
        match *self {
            Event::TaskCompleted { agent, .. }
            | Event::ResourceTaken { agent, .. }
            | Event::UselessAction { agent, .. } => agent,
        }
    }

    /// Contribution of this event to its agent's reward.
    pub fn reward(&self) -> f64 {
        match *self {
            Event::TaskCompleted { reward, .. } | Event::ResourceTaken { reward, .. } => reward,
            Event::UselessAction { penalty, .. } => penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub rewards: Vec<f64>,
    pub events: Vec<Event>,
    pub done: bool,
    /// True when the episode ended because every resource was consumed
    /// (as opposed to hitting `max_steps`).
    pub terminated: bool,
}

/// The grid world. Single-threaded; distinct instances are independent.
#[derive(Debug, Clone)]
pub struct GridEnv {
    cfg: EnvConfig,
    areas: AreaMap,
    agents: Vec<Agent>,
    resources: Vec<Resource>,
    step: u64,
    done: bool,
    rng: ChaCha8Rng,
    agent_at: Vec<Option<usize>>,
    ground_at: Vec<Option<usize>>,
}

impl GridEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        Self::with_rng(cfg, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(cfg: EnvConfig, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        cfg.validate()?;
        let areas = AreaMap::vertical_bands(cfg.width, cfg.height);
        let n = cfg.width * cfg.height;
        Ok(Self {
            cfg,
            areas,
            agents: Vec::new(),
            resources: Vec::new(),
            step: 0,
            done: true,
            rng,
            agent_at: vec![None; n],
            ground_at: vec![None; n],
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn areas(&self) -> &AreaMap {
        &self.areas
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn all_consumed(&self) -> bool {
        self.resources.iter().all(|r| r.location == ResourceLocation::Consumed)
    }

    pub fn ground_resource_at(&self, cell: Cell) -> Option<usize> {
        self.ground_at[self.areas.index(cell)]
    }

    pub fn agent_at(&self, cell: Cell) -> Option<usize> {
        self.agent_at[self.areas.index(cell)]
    }

    /// Number of ground resources currently lying in area 2.
    pub fn area2_ground_count(&self) -> usize {
        self.resources
            .iter()
            .filter(|r| match r.location {
                ResourceLocation::Ground(c) => self.areas.get(c) == Area::Area2,
                _ => false,
            })
            .count()
    }

    /// Starts a new episode: agents at distinct open cells, type-1 resources at
    /// distinct area-1 cells.
    pub fn reset(&mut self) -> Result<Vec<Observation>, EnvError> {
        let area1 = self.areas.cells_in(Area::Area1);
        if area1.len() < self.cfg.n_resources {
            return Err(EnvError::NotEnoughSpawnCells { free: area1.len(), requested: self.cfg.n_resources });
        }
        let open = self.areas.open_cells();
        let agent_cells: Vec<Cell> = open.choose_multiple(&mut self.rng, self.cfg.n_agents).copied().collect();
        let mut agents = Vec::with_capacity(self.cfg.n_agents);
        for (id, cell) in agent_cells.into_iter().enumerate() {
            let orientation = Direction::ALL[self.rng.gen_range(0..4)];
            agents.push(Agent { id, position: cell, orientation, cargo: None });
        }
        let resource_cells: Vec<Cell> = area1.choose_multiple(&mut self.rng, self.cfg.n_resources).copied().collect();
        let resources = resource_cells
            .into_iter()
            .enumerate()
            .map(|(id, cell)| Resource::fresh(id, cell, self.cfg.decay_v0))
            .collect();
        self.agents = agents;
        self.resources = resources;
        self.step = 0;
        self.done = false;
        self.rebuild_occupancy();
        Ok(self.observe_all())
    }

    /// Replaces the dynamic state, e.g. to set up a hand-built scenario.
    /// Validates cell exclusivity, cargo consistency and walls.
    pub fn restore(&mut self, agents: Vec<Agent>, resources: Vec<Resource>, step: u64) -> Result<(), EnvError> {
        let invalid = |m: String| Err(EnvError::InvalidState(m));
        if agents.len() != self.cfg.n_agents {
            return invalid(format!("expected {} agents", self.cfg.n_agents));
        }
        let n = self.cfg.width * self.cfg.height;
        let mut seen_agent = vec![false; n];
        let mut seen_ground = vec![false; n];
        for (i, a) in agents.iter().enumerate() {
            if a.id != i {
                return invalid(format!("agent {i} has id {}", a.id));
            }
            if a.position.x >= self.cfg.width || a.position.y >= self.cfg.height {
                return invalid(format!("agent {i} out of bounds"));
            }
            if self.areas.get(a.position) == Area::Wall {
                return invalid(format!("agent {i} on a wall"));
            }
            let idx = self.areas.index(a.position);
            if std::mem::replace(&mut seen_agent[idx], true) {
                return invalid(format!("two agents on {:?}", a.position));
            }
            if let Some(r) = a.cargo {
                match resources.get(r).map(|r| r.location) {
                    Some(ResourceLocation::Carried(c)) if c == i => {}
                    _ => return invalid(format!("agent {i} cargo {r} inconsistent")),
                }
            }
        }
        for (i, r) in resources.iter().enumerate() {
            if r.id != i {
                return invalid(format!("resource {i} has id {}", r.id));
            }
            if r.target_area != r.rtype.target_area() {
                return invalid(format!("resource {i} target area mismatch"));
            }
            match r.location {
                ResourceLocation::Ground(c) => {
                    if c.x >= self.cfg.width || c.y >= self.cfg.height {
                        return invalid(format!("resource {i} out of bounds"));
                    }
                    if self.areas.get(c) == Area::Wall {
                        return invalid(format!("resource {i} on a wall"));
                    }
                    let idx = self.areas.index(c);
                    if std::mem::replace(&mut seen_ground[idx], true) {
                        return invalid(format!("two ground resources on {c:?}"));
                    }
                }
                ResourceLocation::Carried(a) => {
                    if agents.get(a).and_then(|a| a.cargo) != Some(i) {
                        return invalid(format!("resource {i} carrier {a} inconsistent"));
                    }
                }
                ResourceLocation::Consumed => {}
            }
        }
        self.agents = agents;
        self.resources = resources;
        self.step = step;
        self.rebuild_occupancy();
        self.done = self.step >= self.cfg.max_steps || self.all_consumed();
        Ok(())
    }

    fn rebuild_occupancy(&mut self) {
        self.agent_at.iter_mut().for_each(|c| *c = None);
        self.ground_at.iter_mut().for_each(|c| *c = None);
        for a in &self.agents {
            let idx = self.areas.index(a.position);
            self.agent_at[idx] = Some(a.id);
        }
        for r in &self.resources {
            if let ResourceLocation::Ground(c) = r.location {
                let idx = self.areas.index(c);
                self.ground_at[idx] = Some(r.id);
            }
        }
    }

    /// Applies one joint action. Agents are resolved one at a time in an order
    /// shuffled from the environment RNG.
    pub fn step(&mut self, actions: &[Action]) -> Result<(Vec<Observation>, StepResult), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if actions.len() != self.agents.len() {
            return Err(EnvError::ActionCount { expected: self.agents.len(), got: actions.len() });
        }
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.shuffle(&mut self.rng);

        let mut rewards = vec![self.cfg.r_step; self.agents.len()];
        let mut events = Vec::new();
        for &id in &order {
            if let Some(ev) = self.apply(id, actions[id]) {
                rewards[id] += ev.reward();
                events.push(ev);
            }
        }

        self.step += 1;
        let terminated = self.all_consumed();
        self.done = terminated || self.step >= self.cfg.max_steps;
        let result = StepResult { rewards, events, done: self.done, terminated };
        Ok((self.observe_all(), result))
    }

    fn useless(&self, agent: usize, action: Action) -> Option<Event> {
        Some(Event::UselessAction { agent, action, penalty: self.cfg.r_useless })
    }

    fn apply(&mut self, id: usize, action: Action) -> Option<Event> {
        let pos = self.agents[id].position;
        match action {
            Action::TurnLeft => {
                let a = &mut self.agents[id];
                a.orientation = a.orientation.turn_left();
                None
            }
            Action::TurnRight => {
                let a = &mut self.agents[id];
                a.orientation = a.orientation.turn_right();
                None
            }
            Action::MoveForward => {
                let (dx, dy) = self.agents[id].orientation.offset();
                let (tx, ty) = (pos.x as isize + dx, pos.y as isize + dy);
                if self.areas.get_signed(tx, ty) == Area::Wall {
                    return self.useless(id, action);
                }
                let target = Cell::new(tx as usize, ty as usize);
                let t_idx = self.areas.index(target);
                if self.agent_at[t_idx].is_some() {
                    return self.useless(id, action);
                }
                let p_idx = self.areas.index(pos);
                self.agent_at[p_idx] = None;
                self.agent_at[t_idx] = Some(id);
                self.agents[id].position = target;
                None
            }
            Action::Take => {
                let idx = self.areas.index(pos);
                let rid = match (self.agents[id].cargo, self.ground_at[idx]) {
                    (None, Some(rid)) => rid,
                    _ => return self.useless(id, action),
                };
                self.ground_at[idx] = None;
                self.agents[id].cargo = Some(rid);
                let res = &mut self.resources[rid];
                res.location = ResourceLocation::Carried(id);
                let reward = if res.pickup_paid { 0.0 } else { self.cfg.r_pickup };
                res.pickup_paid = true;
                Some(Event::ResourceTaken { agent: id, resource: rid, reward })
            }
            Action::Drop => {
                let idx = self.areas.index(pos);
                let area = self.areas.get(pos);
                let rid = match self.agents[id].cargo {
                    Some(rid) if self.ground_at[idx].is_none() => rid,
                    _ => return self.useless(id, action),
                };
                if area == Area::Area2 && !self.cfg.bottleneck.allows(self.area2_ground_count()) {
                    return self.useless(id, action);
                }
                self.agents[id].cargo = None;
                let now = self.step;
                let v0 = self.cfg.decay_v0;
                let value = self.resources[rid].value_at(now, &self.cfg);
                let res = &mut self.resources[rid];
                if area != res.target_area {
                    res.location = ResourceLocation::Ground(pos);
                    self.ground_at[idx] = Some(rid);
                    return None;
                }
                let task = res.rtype.task();
                match res.rtype {
                    ResourceType::One => {
                        res.rtype = ResourceType::Two;
                        res.target_area = Area::Area3;
                        res.value_initial = v0;
                        res.assign_step = now;
                        res.pickup_paid = false;
                        res.location = ResourceLocation::Ground(pos);
                        self.ground_at[idx] = Some(rid);
                    }
                    ResourceType::Two => {
                        res.location = ResourceLocation::Consumed;
                    }
                }
                Some(Event::TaskCompleted { agent: id, task, reward: value })
            }
        }
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.agents.len()).map(|i| self.observe(i)).collect()
    }

    /// Axis-aligned 7×7 window centered on agent `id`, plus scalar features.
    pub fn observe(&self, id: usize) -> Observation {
        let me = &self.agents[id];
        let mut obs = Observation::zeros();
        let r = OBS_RADIUS as isize;
        for wy in 0..OBS_SIDE {
            for wx in 0..OBS_SIDE {
                let x = me.position.x as isize + wx as isize - r;
                let y = me.position.y as isize + wy as isize - r;
                let area = self.areas.get_signed(x, y);
                if area == Area::Wall {
                    obs.set(observation::CH_WALL, wy, wx, 1.0);
                    continue;
                }
                obs.set(observation::CH_AREA, wy, wx, area.code());
                let idx = y as usize * self.cfg.width + x as usize;
                if let Some(rid) = self.ground_at[idx] {
                    let ch = match self.resources[rid].rtype {
                        ResourceType::One => observation::CH_TYPE1,
                        ResourceType::Two => observation::CH_TYPE2,
                    };
                    obs.set(ch, wy, wx, 1.0);
                }
                if let Some(other) = self.agent_at[idx] {
                    if other != id {
                        obs.set(observation::CH_AGENT, wy, wx, 1.0);
                    }
                }
            }
        }
        obs.scalars[me.orientation.index()] = 1.0;
        match me.cargo {
            None => obs.scalars[4] = 1.0,
            Some(rid) => {
                let res = &self.resources[rid];
                let slot = match res.rtype {
                    ResourceType::One => 5,
                    ResourceType::Two => 6,
                };
                obs.scalars[slot] = 1.0;
                let v = res.value_at(self.step, &self.cfg) / self.cfg.decay_v0;
                obs.scalars[7] = v.clamp(0.0, 1.0) as f32;
            }
        }
        obs
    }

    pub fn render_frame(&self) -> Frame {
        frame::render(self)
    }
}
