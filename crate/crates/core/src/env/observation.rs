pub const OBS_RADIUS: usize = 3;
pub const OBS_SIDE: usize = 2 * OBS_RADIUS + 1;
pub const OBS_CHANNELS: usize = 5;
pub const OBS_CELLS: usize = OBS_SIDE * OBS_SIDE;
pub const OBS_SCALARS: usize = 8;

pub(crate) const CH_WALL: usize = 0;
pub(crate) const CH_AREA: usize = 1;
pub(crate) const CH_TYPE1: usize = 2;
pub(crate) const CH_TYPE2: usize = 3;
pub(crate) const CH_AGENT: usize = 4;

/// One agent's view: a channel-major `5 × 7 × 7` window and 8 scalars.
///
/// Channels: wall (out-of-bounds included), area code (0, 1/3, 2/3, 1),
/// type-1 ground resource, type-2 ground resource, other agent.
/// Scalars: orientation one-hot (N, E, S, W), cargo one-hot (none, type 1,
/// type 2), carried value divided by the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub grid: Vec<f32>,
    pub scalars: [f32; OBS_SCALARS],
}

impl Observation {
    pub fn zeros() -> Self {
        Self { grid: vec![0.0; OBS_CHANNELS * OBS_CELLS], scalars: [0.0; OBS_SCALARS] }
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.grid[channel * OBS_CELLS + row * OBS_SIDE + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, channel: usize, row: usize, col: usize, v: f32) {
        self.grid[channel * OBS_CELLS + row * OBS_SIDE + col] = v;
    }
}
