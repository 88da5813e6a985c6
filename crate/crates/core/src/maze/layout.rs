//! Maze layouts parsed from ASCII grids.
//!
//! `#` is a wall, `.` is free space, and a digit marks a portal cell: an even
//! digit `2n` is an entry of portal group `n`, the odd digit `2n + 1` marks
//! that group's exits. Rows are listed top to bottom; `y` grows downward.

use std::collections::VecDeque;
use std::path::Path;

use crate::error::{Error, Result};

/// World units per grid cell.
pub const CELL_SIZE: f32 = 2.0;

const SHIPPED: &[(&str, &str)] = &[
    ("medium", include_str!("../../layouts/medium.txt")),
    ("large", include_str!("../../layouts/large.txt")),
    ("giant", include_str!("../../layouts/giant.txt")),
    ("teleport", include_str!("../../layouts/teleport.txt")),
];

pub fn shipped_layout_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    PortalEntry(u8),
    PortalExit(u8),
}

impl Cell {
    pub fn is_free(self) -> bool {
        self != Cell::Wall
    }
}

pub type CellIdx = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct PortalPair {
    pub entry: CellIdx,
    pub exits: Vec<CellIdx>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MazeLayout {
    pub name: String,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    pub cell_size: f32,
    pub portal_pairs: Vec<PortalPair>,
}

impl MazeLayout {
    /// A shipped layout by name, or a path to an ASCII grid file.
    pub fn load(name: &str) -> Result<Self> {
        if let Some((n, text)) = SHIPPED.iter().find(|(n, _)| *n == name) {
            return Self::parse(n, text);
        }
        let path = Path::new(name);
        if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
            return Self::parse(stem, &text);
        }
        Err(Error::UnknownLayout(name.to_string()))
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if lines.len() < 3 {
            return Err(Error::MalformedGrid("need at least 3 rows".into()));
        }
        let cols = lines[0].chars().count();
        if cols < 3 {
            return Err(Error::MalformedGrid("need at least 3 columns".into()));
        }
        let rows = lines.len();
        let mut cells = Vec::with_capacity(rows * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::MalformedGrid(format!("row {r} has {} columns, expected {cols}", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    d @ '0'..='9' => {
                        let d = d as u8 - b'0';
                        if d % 2 == 0 {
                            Cell::PortalEntry(d / 2)
                        } else {
                            Cell::PortalExit(d / 2)
                        }
                    }
                    other => return Err(Error::MalformedGrid(format!("unexpected {other:?} at row {r}, column {c}"))),
                };
                if (r == 0 || c == 0 || r + 1 == rows || c + 1 == cols) && cell != Cell::Wall {
                    return Err(Error::MalformedGrid(format!("border cell ({r}, {c}) is not a wall")));
                }
                cells.push(cell);
            }
        }
        let mut portal_pairs = Vec::new();
        for group in 0..5u8 {
            let members = |want: Cell| -> Vec<CellIdx> {
                (0..rows * cols).filter(|&i| cells[i] == want).map(|i| (i / cols, i % cols)).collect()
            };
            let entries = members(Cell::PortalEntry(group));
            let exits = members(Cell::PortalExit(group));
            if entries.is_empty() != exits.is_empty() {
                return Err(Error::MalformedGrid(format!(
                    "portal group {group} needs both entries ({}) and exits ({})",
                    entries.len(),
                    exits.len()
                )));
            }
            for entry in entries {
                portal_pairs.push(PortalPair { entry, exits: exits.clone() });
            }
        }
        let layout = MazeLayout { name: name.to_string(), rows, cols, cells, cell_size: CELL_SIZE, portal_pairs };
        let free = layout.free_cells();
        if free.is_empty() || layout.flood_fill(free[0]).len() != free.len() {
            return Err(Error::Disconnected(name.to_string()));
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// World extent `(width, height)`.
    pub fn extent(&self) -> (f32, f32) {
        (self.cols as f32 * self.cell_size, self.rows as f32 * self.cell_size)
    }

    pub fn cell(&self, (r, c): CellIdx) -> Cell {
        self.cells[r * self.cols + c]
    }

    /// The cell containing a world position, or `None` outside the grid.
    pub fn cell_at(&self, x: f32, y: f32) -> Option<CellIdx> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (c, r) = ((x / self.cell_size) as usize, (y / self.cell_size) as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn is_free_at(&self, x: f32, y: f32) -> bool {
        self.cell_at(x, y).is_some_and(|i| self.cell(i).is_free())
    }

    pub fn cell_center(&self, (r, c): CellIdx) -> [f32; 2] {
        [(c as f32 + 0.5) * self.cell_size, (r as f32 + 0.5) * self.cell_size]
    }

    pub fn free_cells(&self) -> Vec<CellIdx> {
        (0..self.rows * self.cols)
            .filter(|&i| self.cells[i].is_free())
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }

    pub fn wall_cells(&self) -> Vec<CellIdx> {
        (0..self.rows * self.cols)
            .filter(|&i| !self.cells[i].is_free())
            .map(|i| (i / self.cols, i % self.cols))
            .collect()
    }

    pub fn portal_for(&self, cell: CellIdx) -> Option<&PortalPair> {
        self.portal_pairs.iter().find(|p| p.entry == cell)
    }

    pub fn neighbors(&self, (r, c): CellIdx) -> impl Iterator<Item = CellIdx> + '_ {
        let cand = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        cand.into_iter()
            .filter(move |&(rr, cc)| rr < self.rows && cc < self.cols && self.cell((rr, cc)).is_free())
    }

    /// Free cells 4-connected to `start`.
    pub fn flood_fill(&self, start: CellIdx) -> Vec<CellIdx> {
        self.bfs_distances(start, |_| true)
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(i, _)| (i / self.cols, i % self.cols))
            .collect()
    }

    /// BFS hop counts from `start` over free cells accepted by `passable`,
    /// indexed by `row * cols + col`.
    pub fn bfs_distances(&self, start: CellIdx, passable: impl Fn(CellIdx) -> bool) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.rows * self.cols];
        if !self.cell(start).is_free() {
            return dist;
        }
        dist[start.0 * self.cols + start.1] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.0 * self.cols + cur.1].unwrap_or(0);
            for n in self.neighbors(cur) {
                let slot = &mut dist[n.0 * self.cols + n.1];
                if slot.is_none() && passable(n) {
                    *slot = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Longest shortest path, in cells, between any two free cells.
    pub fn diameter(&self) -> u32 {
        self.free_cells()
            .into_iter()
            .map(|c| self.bfs_distances(c, |_| true).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Euclidean distance from a world point to the nearest free cell, in world units.
    pub fn distance_to_free(&self, x: f32, y: f32) -> f32 {
        self.free_cells()
            .into_iter()
            .map(|(r, c)| {
                let (x0, y0) = (c as f32 * self.cell_size, r as f32 * self.cell_size);
                let dx = (x0 - x).max(0.0).max(x - (x0 + self.cell_size));
                let dy = (y0 - y).max(0.0).max(y - (y0 + self.cell_size));
                (dx * dx + dy * dy).sqrt()
            })
            .fold(f32::INFINITY, f32::min)
    }
}
