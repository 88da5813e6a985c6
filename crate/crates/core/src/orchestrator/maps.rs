//! Classifier heatmaps with keypoint and plan overlays.

use std::fmt::Write as _;

use super::model::Model;
use crate::latent::encode_matrix;
use crate::maze::{CellIdx, MazeLayout};
use crate::ood::classify_observations;
use crate::planner::PlanDump;
use crate::{Error, Result};

pub struct MapImage {
    pub width: usize,
    pub height: usize,
    /// ψ at rest, row-major, row 0 at the top (largest y).
    pub psi: Vec<f64>,
    /// Binary portable pixmap.
    pub ppm: Vec<u8>,
    /// `x,y,free,psi` per grid point.
    pub csv: String,
}

const KEYPOINT: [u8; 3] = [230, 30, 30];
const PATH: [u8; 3] = [255, 255, 255];
const WALL_TINT: f32 = 0.55;

fn ramp(p: f64) -> [u8; 3] {
    // dark blue through teal to yellow
    let t = p.clamp(0.0, 1.0) as f32;
    let (r, g, b) = if t < 0.5 {
        let u = t * 2.0;
        (20.0 + 10.0 * u, 30.0 + 130.0 * u, 90.0 + 50.0 * u)
    } else {
        let u = (t - 0.5) * 2.0;
        (30.0 + 220.0 * u, 160.0 + 70.0 * u, 140.0 - 100.0 * u)
    };
    [r as u8, g as u8, b as u8]
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[u8; 3]>,
    sx: f32,
    sy: f32,
}

impl Canvas {
    fn pixel_of(&self, x: f32, y: f32) -> (isize, isize) {
        ((x * self.sx) as isize, self.h as isize - 1 - (y * self.sy) as isize)
    }

    fn put(&mut self, i: isize, j: isize, c: [u8; 3]) {
        if i >= 0 && j >= 0 && (i as usize) < self.w && (j as usize) < self.h {
            self.px[j as usize * self.w + i as usize] = c;
        }
    }

    fn dot(&mut self, x: f32, y: f32, radius: isize, c: [u8; 3]) {
        let (i0, j0) = self.pixel_of(x, y);
        for dj in -radius..=radius {
            for di in -radius..=radius {
                if di * di + dj * dj <= radius * radius {
                    self.put(i0 + di, j0 + dj, c);
                }
            }
        }
    }

    fn line(&mut self, a: [f32; 2], b: [f32; 2], c: [u8; 3]) {
        let (p, q) = (self.pixel_of(a[0], a[1]), self.pixel_of(b[0], b[1]));
        let n = (q.0 - p.0).abs().max((q.1 - p.1).abs()).max(1);
        for k in 0..=n {
            let t = k as f32 / n as f32;
            let i = p.0 as f32 + t * (q.0 - p.0) as f32;
            let j = p.1 as f32 + t * (q.1 - p.1) as f32;
            self.put(i.round() as isize, j.round() as isize, c);
        }
    }
}

/// Renders ψ over a `resolution × resolution` grid of cell-sample points
/// covering the layout, with velocity zero.
pub fn emit_maps(model: &Model, layout: &MazeLayout, resolution: usize, plan: Option<&PlanDump>) -> Result<MapImage> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("map resolution must be positive".into()));
    }
    let (ex, ey) = layout.extent();
    let (w, h) = (resolution, resolution);
    let mut obs = Vec::with_capacity(w * h);
    for j in 0..h {
        let y = ey * (h - j) as f32 / h as f32 - 0.5 * ey / h as f32;
        for i in 0..w {
            let x = ex * (i as f32 + 0.5) / w as f32;
            obs.push([x, y, 0.0, 0.0]);
        }
    }
    let psi = classify_observations(&model.phi.net, &model.psi.net, &obs)?;
    let mut csv = String::from("x,y,free,psi\n");
    let mut px = Vec::with_capacity(w * h);
    for (o, &p) in obs.iter().zip(&psi) {
        let free = layout.is_free_at(o[0], o[1]);
        let _ = writeln!(csv, "{},{},{},{:.6}", o[0], o[1], u8::from(free), p);
        let mut c = ramp(p);
        if !free {
            c = c.map(|v| (v as f32 * WALL_TINT) as u8);
        }
        px.push(c);
    }
    let mut canvas = Canvas { w, h, px, sx: w as f32 / ex, sy: h as f32 / ey };
    let radius = (resolution / 120).max(1) as isize;
    if let Some(plan) = plan {
        for pair in plan.path.windows(2) {
            canvas.line(plan.nodes[pair[0]], plan.nodes[pair[1]], PATH);
        }
    }
    for a in model.kps.anchors() {
        canvas.dot(a[0], a[1], radius, KEYPOINT);
    }
    let mut ppm = format!("P6\n{w} {h}\n255\n").into_bytes();
    ppm.extend(canvas.px.iter().flatten());
    Ok(MapImage { width: w, height: h, psi, ppm, csv })
}

/// Plans from `start` to `goal` over the model's keypoints and records the
/// path taken from the first selected subgoal.
pub fn plan_dump(model: &Model, layout: &MazeLayout, start: CellIdx, goal: CellIdx) -> Result<PlanDump> {
    let goal_pos = layout.cell_center(goal);
    let agent = model.agent();
    let graph = model.keypoint_graph(false)?;
    let plan = graph.plan(&model.head, &agent.goal_latent(goal_pos)?)?;
    let [x, y] = layout.cell_center(start);
    let z = encode_matrix(&model.phi.net, &[[x, y, 0.0, 0.0]])?;
    let e = model.head.embed(&z)?;
    let first = plan.select_subgoal(&model.head, e.row(0)).ok();
    let mut positions: Vec<[f32; 2]> = model.kps.anchors().iter().map(|a| [a[0], a[1]]).collect();
    positions.push(goal_pos);
    Ok(PlanDump::new(&plan, positions, first))
}
