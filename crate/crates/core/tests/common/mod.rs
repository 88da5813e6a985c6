//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use proq::keypoints::repel_energy;
use proq::nn::TrainableVec;
use proq::planner::SquareMatrix;
use rand::Rng;

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

pub fn dijkstra(w: &SquareMatrix, src: usize) -> Vec<f64> {
    let n = w.n;
    let mut dist = vec![f64::INFINITY; n];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, src)]);
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for v in 0..n {
            let e = w.get(u, v);
            if u != v && e.is_finite() && d + e < dist[v] {
                dist[v] = d + e;
                heap.push(Entry(dist[v], v));
            }
        }
    }
    dist
}

pub fn random_graph(rng: &mut impl Rng) -> SquareMatrix {
    let n = rng.gen_range(1..=50);
    let cut = rng.gen_range(0.0..0.9);
    let mut w = SquareMatrix::filled(n, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w.set(i, j, if rng.gen::<f64>() < cut { f64::INFINITY } else { rng.gen_range(0.0..100.0) });
            }
        }
    }
    w
}

/// Measure of `union_j [x_j, max(x_j, y_j)]` by marking cells of a uniform
/// grid over `[lo, hi)`. Exact when every endpoint lies on a grid node.
pub fn grid_measure(x: &[f64], y: &[f64], lo: f64, hi: f64, cells: usize) -> f64 {
    let h = (hi - lo) / cells as f64;
    let mut covered = vec![false; cells];
    for (&a, &b) in x.iter().zip(y) {
        if b <= a {
            continue;
        }
        let i0 = ((a - lo) / h).round() as usize;
        let i1 = ((b - lo) / h).round() as usize;
        covered[i0.min(cells)..i1.min(cells)].iter_mut().for_each(|c| *c = true);
    }
    covered.iter().filter(|&&c| c).count() as f64 * h
}

/// Repulsion energy of points on a line under `|x_i - x_j|`.
pub fn line_energy(x: &[f64], lambda: f64, eps: f64) -> f64 {
    let mut e = 0.0;
    for (i, a) in x.iter().enumerate() {
        for (j, b) in x.iter().enumerate() {
            if i != j {
                e += lambda / ((a - b).abs() + eps);
            }
        }
    }
    e
}

/// Lowest-energy sorted configuration of `k` points on `[0, len]` over a
/// grid with `steps + 1` nodes.
pub fn grid_search_segment(k: usize, len: f64, steps: usize, lambda: f64, eps: f64) -> Vec<f64> {
    let node = |i: usize| len * i as f64 / steps as f64;
    let mut best = (f64::INFINITY, vec![]);
    let mut idx = vec![0usize; k];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| node(i)).collect();
        let e = line_energy(&x, lambda, eps);
        if e < best.0 {
            best = (e, x);
        }
        // next non-decreasing index tuple
        let mut p = k;
        while p > 0 && idx[p - 1] == steps {
            p -= 1;
        }
        if p == 0 {
            break;
        }
        idx[p - 1] += 1;
        let v = idx[p - 1];
        idx[p..].iter_mut().for_each(|i| *i = v);
    }
    best.1
}

/// Projected Adam descent of the keypoint repulsion on `[0, len]`, with
/// `dE/dd` from the keypoint energy. Returns sorted positions.
pub fn descend_segment(k: usize, len: f64, lambda: f64, eps: f64, iters: usize, rng: &mut impl Rng) -> Vec<f64> {
    let init: Vec<f32> = (0..k).map(|_| rng.gen_range(0.3 * len..0.7 * len) as f32).collect();
    let mut pos = TrainableVec::new(init, 0.01 * len);
    for _ in 0..iters {
        let x: Vec<f64> = pos.params.values().iter().map(|&v| v as f64).collect();
        let dist: Vec<f32> = (0..k * k).map(|p| (x[p / k] - x[p % k]).abs() as f32).collect();
        let (_, dd) = repel_energy(&dist, k, lambda, eps, f64::INFINITY);
        let mut g = vec![0.0f32; k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let s = (x[i] - x[j]).signum() as f32;
                    // d_ij and d_ji both depend on x_i
                    g[i] += (dd[i * k + j] + dd[j * k + i]) * s;
                }
            }
        }
        pos.step(&g).unwrap();
        for v in pos.params.values_mut() {
            *v = v.clamp(0.0, len as f32);
        }
    }
    let mut x: Vec<f64> = pos.params.values().iter().map(|&v| v as f64).collect();
    x.sort_by(f64::total_cmp);
    x
}
