//! Point-mass dynamics with per-axis wall sliding and stochastic portals.

use rand::{Rng, RngCore};

use super::layout::MazeLayout;

pub const DT: f32 = 1.0;
pub const ACCEL_GAIN: f32 = 0.2;
pub const V_MAX: f32 = 1.0;

/// Observation layout `[x, y, vx, vy]`.
pub type Observation = [f32; 4];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnvState {
    pub position: [f32; 2],
    pub velocity: [f32; 2],
}

impl EnvState {
    pub fn at_rest(position: [f32; 2]) -> Self {
        EnvState { position, velocity: [0.0, 0.0] }
    }

    pub fn observation(&self) -> Observation {
        [self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }

    pub fn from_observation(obs: &Observation) -> Self {
        EnvState { position: [obs[0], obs[1]], velocity: [obs[2], obs[3]] }
    }
}

/// One control step. Actions are clamped to `[-1, 1]`. A move that would end
/// inside a wall leaves that axis where it was and zeroes its velocity; the
/// x axis is resolved before y. Landing on a portal entry relocates the agent,
/// at rest, to the centre of an exit drawn uniformly from `rng`.
pub fn step(layout: &MazeLayout, state: &EnvState, action: [f32; 2], rng: &mut dyn RngCore) -> EnvState {
    let mut next = *state;
    for axis in 0..2 {
        let a = action[axis].clamp(-1.0, 1.0);
        let a = if a.is_nan() { 0.0 } else { a };
        next.velocity[axis] = (next.velocity[axis] + a * ACCEL_GAIN).clamp(-V_MAX, V_MAX);
    }
    for axis in 0..2 {
        let mut moved = next.position;
        moved[axis] += next.velocity[axis] * DT;
        if layout.is_free_at(moved[0], moved[1]) {
            next.position = moved;
        } else {
            next.velocity[axis] = 0.0;
        }
    }
    if let Some(cell) = layout.cell_at(next.position[0], next.position[1]) {
        if let Some(portal) = layout.portal_for(cell) {
            let exit = portal.exits[rng.gen_range(0..portal.exits.len())];
            next = EnvState::at_rest(layout.cell_center(exit));
        }
    }
    next
}

/// Inclusive Euclidean success test on positions.
pub fn goal_reached(state: &EnvState, goal: [f32; 2], eps_env: f32) -> bool {
    let dx = (state.position[0] - goal[0]) as f64;
    let dy = (state.position[1] - goal[1]) as f64;
    (dx * dx + dy * dy).sqrt() <= eps_env as f64
}
