//! Subgoal planning over the keypoint graph, and closed-loop rollouts.

pub mod graph;

pub use graph::{cut_edges, floyd_warshall, reconstruct_path, SquareMatrix, NO_HOP};

use rand::RngCore;
use serde::Serialize;

use crate::actor::PolicyHead;
use crate::latent::{encode_matrix, QuasimetricHead};
use crate::maze::{goal_reached, step, EnvState, MazeLayout, Observation};
use crate::nn::{Matrix, Mlp};
use crate::{Error, Result};

/// Edge weights over the keypoints plus a goal node at index `K`: cut at
/// `tau`, directed, and with no edges leaving the goal.
pub fn build_graph(dist: &SquareMatrix, tau: f64) -> SquareMatrix {
    let mut w = cut_edges(dist, tau);
    let g = dist.n - 1;
    for j in 0..g {
        w.set(g, j, f64::INFINITY);
    }
    w
}

/// Goal-independent part of planning: the keypoint latents, their
/// embeddings, the cut edge weights and their shortest-path closure.
#[derive(Clone, Debug)]
pub struct KeypointGraph {
    pub latents: Matrix<f32>,
    pub embeddings: Matrix<f32>,
    pub weights: SquareMatrix,
    pub dstar: SquareMatrix,
    pub next_hop: Vec<usize>,
    pub tau: f64,
}

impl KeypointGraph {
    pub fn new(latents: &Matrix<f32>, head: &QuasimetricHead<f32>, tau: f64) -> Result<Self> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("cut distance must be positive, got {tau}")));
        }
        let embeddings = head.embed(latents)?;
        let k = latents.rows();
        let raw = head.distance_matrix(&embeddings);
        let weights = cut_edges(&SquareMatrix { n: k, data: raw.iter().map(|&d| d as f64).collect() }, tau);
        let (dstar, next_hop) = floyd_warshall(&weights)?;
        Ok(KeypointGraph { latents: latents.clone(), embeddings, weights, dstar, next_hop, tau })
    }

    pub fn len(&self) -> usize {
        self.latents.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.rows() == 0
    }

    /// Extends the cached closure with a goal node. The goal has no outgoing
    /// edges, so `D*(i, goal) = min_j D*(i, j) + w(j, goal)` and the keypoint
    /// block of the closure is unchanged.
    pub fn plan(&self, head: &QuasimetricHead<f32>, goal_latent: &[f32]) -> Result<PlanTable> {
        let k = self.len();
        let n = k + 1;
        let ge = head.embed(&Matrix::from_vec(1, goal_latent.len(), goal_latent.to_vec()))?;
        let mut edge_weights = SquareMatrix::filled(n, f64::INFINITY);
        let mut dstar = SquareMatrix::filled(n, f64::INFINITY);
        let mut next_hop = vec![NO_HOP; n * n];
        for i in 0..k {
            for j in 0..k {
                edge_weights.set(i, j, self.weights.get(i, j));
                dstar.set(i, j, self.dstar.get(i, j));
                next_hop[i * n + j] = self.next_hop[i * k + j];
            }
            let d = head.distance_embedded(self.embeddings.row(i), ge.row(0)) as f64;
            edge_weights.set(i, k, if d <= self.tau { d } else { f64::INFINITY });
        }
        edge_weights.set(k, k, 0.0);
        dstar.set(k, k, 0.0);
        next_hop[k * n + k] = k;
        for i in 0..k {
            let mut best = (f64::INFINITY, NO_HOP);
            for j in 0..k {
                let c = self.dstar.get(i, j) + edge_weights.get(j, k);
                if c < best.0 {
                    best = (c, j);
                }
            }
            if best.1 != NO_HOP {
                dstar.set(i, k, best.0);
                next_hop[i * n + k] = if best.1 == i { k } else { self.next_hop[i * k + best.1] };
            }
        }
        let mut nodes = Matrix::zeros(n, goal_latent.len());
        for i in 0..k {
            nodes.row_mut(i).copy_from_slice(self.latents.row(i));
        }
        nodes.row_mut(k).copy_from_slice(goal_latent);
        let embeddings = Matrix::vstack(&[&self.embeddings, &ge]);
        Ok(PlanTable { nodes, embeddings, edge_weights, dstar, next_hop, tau: self.tau })
    }
}

/// Keypoints plus goal, with the shortest-path closure.
#[derive(Clone, Debug)]
pub struct PlanTable {
    /// `(K + 1) x 16`, goal last.
    pub nodes: Matrix<f32>,
    pub embeddings: Matrix<f32>,
    pub edge_weights: SquareMatrix,
    pub dstar: SquareMatrix,
    pub next_hop: Vec<usize>,
    pub tau: f64,
}

impl PlanTable {
    pub fn goal_index(&self) -> usize {
        self.nodes.rows() - 1
    }

    /// `argmin_k d(z_s, z_k) + D*(k, goal)`, with agent-to-node distances
    /// above the cut treated as missing edges. Ties go to the smaller index.
    pub fn select_subgoal(&self, head: &QuasimetricHead<f32>, agent_embedding: &[f32]) -> Result<usize> {
        let g = self.goal_index();
        let mut best = (f64::INFINITY, None);
        for k in 0..=g {
            let d = head.distance_embedded(agent_embedding, self.embeddings.row(k)) as f64;
            if d > self.tau {
                continue;
            }
            let c = d + self.dstar.get(k, g);
            if c < best.0 {
                best = (c, Some(k));
            }
        }
        best.1.ok_or(Error::NoPath)
    }

    /// Node path from `from` to the goal.
    pub fn path_to_goal(&self, from: usize) -> Option<Vec<usize>> {
        reconstruct_path(&self.next_hop, self.nodes.rows(), from, self.goal_index())
    }
}

/// The trained networks needed to act.
#[derive(Clone, Copy)]
pub struct Agent<'a> {
    pub phi: &'a Mlp<f32>,
    pub head: &'a QuasimetricHead<f32>,
    pub policy: &'a PolicyHead<f32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Episode {
    pub success: bool,
    pub steps: usize,
    pub positions: Vec<[f32; 2]>,
    pub subgoals: Vec<usize>,
}

impl Agent<'_> {
    pub fn goal_latent(&self, goal: [f32; 2]) -> Result<Vec<f32>> {
        Ok(encode_matrix(self.phi, &[[goal[0], goal[1], 0.0, 0.0]])?.into_vec())
    }

    /// Closed loop: pick a subgoal, act toward its latent, step, until the
    /// goal is within `eps_env` or `horizon` steps have run.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout(
        &self,
        layout: &MazeLayout,
        plan: &PlanTable,
        start: EnvState,
        goal: [f32; 2],
        horizon: usize,
        eps_env: f32,
        deterministic: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Episode> {
        let mut state = start;
        let mut ep = Episode { positions: vec![state.position], ..Episode::default() };
        while !goal_reached(&state, goal, eps_env) {
            if ep.steps >= horizon {
                return Ok(ep);
            }
            let obs: Observation = state.observation();
            let z = encode_matrix(self.phi, &[obs])?;
            let e = self.head.embed(&z)?;
            let k = plan.select_subgoal(self.head, e.row(0))?;
            let action = self.policy.act(&obs, plan.nodes.row(k), deterministic, rng)?;
            state = step(layout, &state, action, rng);
            ep.steps += 1;
            ep.positions.push(state.position);
            ep.subgoals.push(k);
        }
        ep.success = true;
        Ok(ep)
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanDump {
    pub nodes: Vec<[f32; 2]>,
    /// `(from, to, weight)` over finite, non-self edges.
    pub edges: Vec<(usize, usize, f64)>,
    pub dstar_to_goal: Vec<Option<f64>>,
    pub path: Vec<usize>,
}

impl PlanDump {
    /// `positions` gives the plotting coordinates of every node, goal last.
    pub fn new(plan: &PlanTable, positions: Vec<[f32; 2]>, first: Option<usize>) -> Self {
        let n = plan.nodes.rows();
        let g = plan.goal_index();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = plan.edge_weights.get(i, j);
                if i != j && w.is_finite() {
                    edges.push((i, j, w));
                }
            }
        }
        PlanDump {
            nodes: positions,
            edges,
            dstar_to_goal: (0..n).map(|i| finite(plan.dstar.get(i, g))).collect(),
            path: first.and_then(|k| plan.path_to_goal(k)).unwrap_or_default(),
        }
    }
}
