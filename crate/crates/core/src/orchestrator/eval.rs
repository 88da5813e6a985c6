//! Closed-loop evaluation over sampled start/goal pairs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::train::EvalSummary;
use crate::maze::{Cell, CellIdx, EnvState, MazeLayout};
use crate::nn::rng_stream;
use crate::planner::{Episode, KeypointGraph};
use crate::{Error, Result};

/// Success radius, in cells.
pub const SUCCESS_RADIUS_CELLS: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Act with the policy mean instead of sampling.
    pub deterministic: bool,
    pub threads: usize,
    /// Plan over the barrier-free keypoint set instead of the main one.
    pub ablation_keypoints: bool,
}

impl EvalOptions {
    /// Defaults for `layout`: 2000 steps on layouts whose diameter exceeds
    /// 50 cells, otherwise 1000; worker count from `PROQ_THREADS`.
    pub fn for_layout(layout: &MazeLayout, episodes: usize, seed: u64) -> Self {
        EvalOptions {
            episodes,
            horizon: if layout.diameter() > 50 { 2000 } else { 1000 },
            seed,
            deterministic: false,
            threads: threads_from_env(),
            ablation_keypoints: false,
        }
    }
}

pub fn threads_from_env() -> usize {
    std::env::var("PROQ_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Start and goal cells at least half the diameter apart, drawn uniformly
/// from the free cells that are not portal entries.
pub fn sample_task(layout: &MazeLayout, rng: &mut impl Rng) -> (CellIdx, CellIdx) {
    let cells: Vec<CellIdx> =
        layout.free_cells().into_iter().filter(|&c| !matches!(layout.cell(c), Cell::PortalEntry(_))).collect();
    let min_sep = layout.diameter().div_ceil(2);
    loop {
        let start = cells[rng.gen_range(0..cells.len())];
        let goal = cells[rng.gen_range(0..cells.len())];
        let hops = layout.bfs_distances(start, |_| true)[goal.0 * layout.cols() + goal.1];
        if hops.is_some_and(|h| h >= min_sep) {
            return (start, goal);
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub summary: EvalSummary,
    /// `None` where planning failed.
    pub episodes: Vec<Option<Episode>>,
}

/// Runs `options.episodes` rollouts. Episode `k` draws from its own RNG
/// stream, so results do not depend on the worker count.
pub fn evaluate(model: &Model, layout: &MazeLayout, options: &EvalOptions) -> Result<EvalResult> {
    if options.episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    if model.phi.net.spec.input_dim != 4 {
        return Err(Error::Incompatible("encoder does not take maze observations".into()));
    }
    let graph = model.keypoint_graph(options.ablation_keypoints)?;
    let run = |k: usize| -> Result<Option<Episode>> { episode(model, &graph, layout, options, k) };
    let threads = options.threads.clamp(1, options.episodes);
    let mut episodes: Vec<Option<Episode>> = Vec::with_capacity(options.episodes);
    if threads == 1 {
        for k in 0..options.episodes {
            episodes.push(run(k)?);
        }
    } else {
        let chunks: Vec<Result<Vec<Option<Episode>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let run = &run;
                    s.spawn(move || (t..options.episodes).step_by(threads).map(run).collect::<Result<Vec<_>>>())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;
        for k in 0..options.episodes {
            episodes.push(chunks[k % threads][k / threads].clone());
        }
    }
    let successes = episodes.iter().flatten().filter(|e| e.success).count();
    let steps: Vec<f64> = episodes.iter().flatten().filter(|e| e.success).map(|e| e.steps as f64).collect();
    let summary = EvalSummary {
        layout: layout.name.clone(),
        episodes: options.episodes,
        successes,
        success_rate: successes as f64 / options.episodes as f64,
        mean_steps_success: if steps.is_empty() { 0.0 } else { steps.iter().sum::<f64>() / steps.len() as f64 },
        plan_failures: episodes.iter().filter(|e| e.is_none()).count(),
    };
    Ok(EvalResult { summary, episodes })
}

fn episode(model: &Model, graph: &KeypointGraph, layout: &MazeLayout, o: &EvalOptions, k: usize) -> Result<Option<Episode>> {
    let mut rng = rng_stream(o.seed, k as u64);
    let (start, goal) = sample_task(layout, &mut rng);
    let goal_pos = layout.cell_center(goal);
    let agent = model.agent();
    let plan = graph.plan(&model.head, &agent.goal_latent(goal_pos)?)?;
    let eps = SUCCESS_RADIUS_CELLS * layout.cell_size;
    let start_state = EnvState::at_rest(layout.cell_center(start));
    match agent.rollout(layout, &plan, start_state, goal_pos, o.horizon, eps, o.deterministic, &mut rng) {
        Ok(ep) => Ok(Some(ep)),
        Err(Error::NoPath) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fractions of probes on the right side of the classifier thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub free_probes: usize,
    pub free_high: f64,
    pub wall_probes: usize,
    pub wall_low: f64,
}

/// Probes ψ at rest on uniform points in free cells and on points inside
/// walls at least one cell from free space.
pub fn calibration(model: &Model, layout: &MazeLayout, probes: usize, seed: u64) -> Result<Calibration> {
    let mut rng = rng_stream(seed, 0);
    let cs = layout.cell_size;
    let pick = |cells: &[CellIdx], rng: &mut ChaCha8Rng| {
        let (r, c) = cells[rng.gen_range(0..cells.len())];
        [(c as f32 + rng.gen::<f32>()) * cs, (r as f32 + rng.gen::<f32>()) * cs]
    };
    let free = layout.free_cells();
    let free_obs: Vec<[f32; 4]> = (0..probes).map(|_| pick(&free, &mut rng)).map(|[x, y]| [x, y, 0.0, 0.0]).collect();
    let walls = layout.wall_cells();
    let mut wall_obs = Vec::with_capacity(probes);
    let mut tries = 0usize;
    while wall_obs.len() < probes && !walls.is_empty() && tries < 1000 * probes {
        tries += 1;
        let [x, y] = pick(&walls, &mut rng);
        if layout.distance_to_free(x, y) >= cs {
            wall_obs.push([x, y, 0.0, 0.0]);
        }
    }
    let pf = crate::ood::classify_observations(&model.phi.net, &model.psi.net, &free_obs)?;
    let pw = if wall_obs.is_empty() {
        Vec::new()
    } else {
        crate::ood::classify_observations(&model.phi.net, &model.psi.net, &wall_obs)?
    };
    let frac = |v: &[f64], f: &dyn Fn(f64) -> bool| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&p| f(p)).count() as f64 / v.len() as f64
        }
    };
    Ok(Calibration {
        free_probes: pf.len(),
        free_high: frac(&pf, &|p| p >= 0.7),
        wall_probes: pw.len(),
        wall_low: frac(&pw, &|p| p <= 0.3),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub anchors: usize,
    pub in_free: usize,
    /// Largest distance from a free cell center to its nearest anchor, in cells.
    pub worst_gap_cells: f64,
}

pub fn placement(anchors: &[[f32; 4]], layout: &MazeLayout) -> Placement {
    let in_free = anchors.iter().filter(|a| layout.is_free_at(a[0], a[1])).count();
    let worst = layout
        .free_cells()
        .into_iter()
        .map(|c| {
            let [x, y] = layout.cell_center(c);
            anchors
                .iter()
                .map(|a| ((a[0] - x) as f64).hypot((a[1] - y) as f64))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Placement { anchors: anchors.len(), in_free, worst_gap_cells: worst / layout.cell_size as f64 }
}

/// Mean latent distance over consecutive pairs of `transitions`.
pub fn successor_distance(model: &Model, transitions: &[crate::maze::Transition]) -> Result<f64> {
    if transitions.is_empty() {
        return Err(Error::InvalidArgument("no transitions to measure".into()));
    }
    let s: Vec<[f32; 4]> = transitions.iter().map(|t| t.state).collect();
    let n: Vec<[f32; 4]> = transitions.iter().map(|t| t.next_state).collect();
    let zs = crate::latent::encode_batch(&model.phi.net, &s)?;
    let zn = crate::latent::encode_batch(&model.phi.net, &n)?;
    let mut total = 0.0;
    for (a, b) in zs.iter().zip(&zn) {
        total += model.head.distance(a.as_slice(), b.as_slice())? as f64;
    }
    Ok(total / transitions.len() as f64)
}

/// Restores a checkpoint and evaluates it on `layout`, which must be the
/// layout it was trained on.
pub fn evaluate_checkpoint(ck: &crate::nn::checkpoint::Checkpoint, layout: &MazeLayout, options: &EvalOptions) -> Result<EvalResult> {
    let (model, config) = Model::from_checkpoint(ck)?;
    if config.layout != layout.name {
        return Err(Error::Incompatible(format!("checkpoint was trained on {}, not {}", config.layout, layout.name)));
    }
    evaluate(&model, layout, options)
}
