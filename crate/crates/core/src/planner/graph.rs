//! Directed keypoint graphs and their shortest-path closure.

use crate::{Error, Result};

/// Sentinel in `next_hop` for unreachable pairs.
pub const NO_HOP: usize = usize::MAX;

/// Row-major square matrix of edge weights or path lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn filled(n: usize, v: f64) -> Self {
        SquareMatrix { n, data: vec![v; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        SquareMatrix { n, data: (0..n * n).map(|p| f(p / n, p % n)).collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Edge weight `d_ij` if it is at most `tau`, else `+inf`; zero on the
/// diagonal. Not symmetrized.
pub fn cut_edges(dist: &SquareMatrix, tau: f64) -> SquareMatrix {
    SquareMatrix::from_fn(dist.n, |i, j| {
        let d = dist.get(i, j);
        if i == j {
            0.0
        } else if d <= tau {
            d
        } else {
            f64::INFINITY
        }
    })
}

/// All-pairs shortest paths plus the first hop of one shortest path for every
/// reachable pair.
pub fn floyd_warshall(weights: &SquareMatrix) -> Result<(SquareMatrix, Vec<usize>)> {
    let n = weights.n;
    let mut d = weights.clone();
    let mut next = vec![NO_HOP; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = weights.get(i, j);
            if w.is_nan() || w < 0.0 {
                return Err(Error::NegativeWeight { from: i, to: j, weight: w });
            }
            if i == j {
                d.set(i, i, 0.0);
                next[i * n + i] = i;
            } else if w.is_finite() {
                next[i * n + j] = j;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d.data[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d.data[k * n + j];
                if via < d.data[i * n + j] {
                    d.data[i * n + j] = via;
                    next[i * n + j] = next[i * n + k];
                }
            }
        }
    }
    Ok((d, next))
}

/// Node sequence from `from` to `to` following `next`, or `None` if
/// unreachable.
pub fn reconstruct_path(next: &[usize], n: usize, from: usize, to: usize) -> Option<Vec<usize>> {
    if next[from * n + to] == NO_HOP {
        return None;
    }
    let mut path = vec![from];
    let mut at = from;
    while at != to {
        at = next[at * n + to];
        path.push(at);
        if path.len() > n {
            return None;
        }
    }
    Some(path)
}
