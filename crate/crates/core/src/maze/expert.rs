//! Scripted noisy expert that follows BFS waypoints toward a goal cell.

use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::env::EnvState;
use super::layout::{Cell, CellIdx, MazeLayout};

pub const EXPERT_NOISE_STD: f32 = 0.3;

/// Distance field toward one goal cell; portal entries are avoided.
#[derive(Clone, Debug)]
pub struct Expert<'a> {
    layout: &'a MazeLayout,
    goal: CellIdx,
    dist: Vec<Option<u32>>,
}

impl<'a> Expert<'a> {
    /// `None` when the goal is a wall or cannot be reached.
    pub fn new(layout: &'a MazeLayout, goal: CellIdx) -> Option<Self> {
        if !layout.cell(goal).is_free() {
            return None;
        }
        let mut dist = layout.bfs_distances(goal, |c| !matches!(layout.cell(c), Cell::PortalEntry(_)));
        if dist.iter().flatten().count() < 2 && layout.free_cells().len() > 1 {
            dist = layout.bfs_distances(goal, |_| true);
        }
        Some(Expert { layout, goal, dist })
    }

    pub fn goal(&self) -> CellIdx {
        self.goal
    }

    /// Centre of the next cell on a shortest path (the goal centre once inside it).
    pub fn waypoint(&self, state: &EnvState) -> Option<[f32; 2]> {
        let cols = self.layout.cols();
        let here = self.layout.cell_at(state.position[0], state.position[1])?;
        if here == self.goal {
            return Some(self.layout.cell_center(here));
        }
        let next = self
            .layout
            .neighbors(here)
            .filter_map(|n| self.dist[n.0 * cols + n.1].map(|d| (d, n)))
            .min()?;
        Some(self.layout.cell_center(next.1))
    }

    /// Unit direction toward the waypoint plus Gaussian noise, clamped to `[-1, 1]`.
    pub fn act(&self, state: &EnvState, noise_std: f32, rng: &mut dyn RngCore) -> [f32; 2] {
        let mut action = [0.0f32; 2];
        if let Some([wx, wy]) = self.waypoint(state) {
            let (dx, dy) = (wx - state.position[0], wy - state.position[1]);
            let norm = (dx * dx + dy * dy).sqrt();
            if norm > 0.0 {
                action = [dx / norm, dy / norm];
            }
        }
        if noise_std > 0.0 {
            let normal = Normal::new(0.0f32, noise_std).expect("positive std");
            for a in &mut action {
                *a += normal.sample(rng);
            }
        }
        action.map(|a| a.clamp(-1.0, 1.0))
    }
}
