//! Offline transition datasets and their `PROQD1` file format.
//!
//! ```text
//! "PROQD1" | u32 name_len | name | u8 style | u64 count | record*
//! record = 10 x f32 (state[4], action[2], next_state[4]) | u32 traj_id | u32 step_idx
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use super::env::{step, EnvState, Observation};
use super::expert::{Expert, EXPERT_NOISE_STD};
use super::layout::{Cell, CellIdx, MazeLayout};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::nn::rng_stream;

pub const MAGIC: &[u8; 6] = b"PROQD1";
pub const RECORD_BYTES: usize = 10 * 4 + 2 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Navigate,
    Stitch,
}

impl Style {
    pub fn trajectory_length(self) -> usize {
        match self {
            Style::Navigate => 1000,
            Style::Stitch => 200,
        }
    }

    fn byte(self) -> u8 {
        match self {
            Style::Navigate => 0,
            Style::Stitch => 1,
        }
    }
}

impl std::str::FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navigate" => Ok(Style::Navigate),
            "stitch" => Ok(Style::Stitch),
            other => Err(Error::InvalidStyle(other.to_string())),
        }
    }
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Style::Navigate => "navigate",
            Style::Stitch => "stitch",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub state: Observation,
    pub action: [f32; 2],
    pub next_state: Observation,
    pub traj_id: u32,
    pub step_idx: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub layout_name: String,
    pub style: Style,
    transitions: Vec<Transition>,
    /// Start offset of every trajectory, followed by `transitions.len()`.
    offsets: Vec<usize>,
}

impl Dataset {
    /// Builds the trajectory index; trajectories must be contiguous with
    /// strictly increasing step indices.
    pub fn new(layout_name: String, style: Style, transitions: Vec<Transition>) -> Result<Self> {
        let mut offsets = Vec::new();
        let mut seen = HashSet::new();
        for (i, t) in transitions.iter().enumerate() {
            if !t.state.iter().chain(&t.action).chain(&t.next_state).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("transition"));
            }
            let continues = i > 0 && transitions[i - 1].traj_id == t.traj_id;
            if continues {
                if t.step_idx <= transitions[i - 1].step_idx {
                    return Err(Error::format("dataset", format!("step_idx not increasing in trajectory {}", t.traj_id)));
                }
            } else {
                if !seen.insert(t.traj_id) {
                    return Err(Error::format("dataset", format!("trajectory {} is not contiguous", t.traj_id)));
                }
                offsets.push(i);
            }
        }
        offsets.push(transitions.len());
        Ok(Dataset { layout_name, style, transitions, offsets })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn num_trajectories(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Index range of trajectory number `k` (in file order).
    pub fn trajectory_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn trajectory(&self, k: usize) -> &[Transition] {
        &self.transitions[self.trajectory_range(k)]
    }

    /// Trajectory number containing transition `i`.
    pub fn trajectory_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }

    /// Fraction of the layout's free cells visited by any stored state.
    pub fn coverage(&self, layout: &MazeLayout) -> f64 {
        let mut visited = HashSet::new();
        for t in &self.transitions {
            for obs in [&t.state, &t.next_state] {
                if let Some(c) = layout.cell_at(obs[0], obs[1]) {
                    visited.insert(c);
                }
            }
        }
        let free = layout.free_cells();
        free.iter().filter(|c| visited.contains(c)).count() as f64 / free.len() as f64
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(self.layout_name.len() as u32);
        w.bytes(self.layout_name.as_bytes());
        w.u8(self.style.byte());
        w.u64(self.transitions.len() as u64);
        w.buf.reserve(self.transitions.len() * RECORD_BYTES);
        for t in &self.transitions {
            w.f32s(&t.state);
            w.f32s(&t.action);
            w.f32s(&t.next_state);
            w.u32(t.traj_id);
            w.u32(t.step_idx);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset");
        if r.bytes(MAGIC.len())? != MAGIC {
            return Err(r.err("bad magic"));
        }
        let name_len = r.u32()?;
        let name_len = r.count(name_len as u64, 1)?;
        let layout_name = r.string(name_len)?;
        let style = match r.u8()? {
            0 => Style::Navigate,
            1 => Style::Stitch,
            other => return Err(Error::InvalidStyle(format!("style byte {other}"))),
        };
        let count = r.u64()?;
        let count = r.count(count, RECORD_BYTES)?;
        let mut transitions = Vec::with_capacity(count);
        for _ in 0..count {
            let v = r.f32_vec(10)?;
            transitions.push(Transition {
                state: [v[0], v[1], v[2], v[3]],
                action: [v[4], v[5]],
                next_state: [v[6], v[7], v[8], v[9]],
                traj_id: r.u32()?,
                step_idx: r.u32()?,
            });
        }
        r.finish()?;
        Dataset::new(layout_name, style, transitions)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Newline-delimited JSON, one transition per line.
    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for t in &self.transitions {
            serde_json::to_writer(&mut *out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn spawn_cells(layout: &MazeLayout) -> Vec<CellIdx> {
    layout
        .free_cells()
        .into_iter()
        .filter(|&c| !matches!(layout.cell(c), Cell::PortalEntry(_)))
        .collect()
}

/// Rolls out the noisy expert. Trajectory `k` draws from its own RNG stream,
/// so the result depends only on `(layout, style, n_transitions, seed)`.
pub fn generate_dataset(layout: &MazeLayout, style: Style, n_transitions: usize, seed: u64) -> Result<Dataset> {
    let len = style.trajectory_length();
    if n_transitions == 0 || n_transitions % len != 0 {
        return Err(Error::InvalidArgument(format!(
            "{n_transitions} transitions is not a positive multiple of the {style} trajectory length {len}"
        )));
    }
    let cells = spawn_cells(layout);
    if cells.len() < 2 {
        return Err(Error::InvalidArgument("layout needs at least two spawnable cells".into()));
    }
    let mut transitions = Vec::with_capacity(n_transitions);
    for traj in 0..n_transitions / len {
        let mut rng = rng_stream(seed, traj as u64);
        let start = cells[rng.gen_range(0..cells.len())];
        let [cx, cy] = layout.cell_center(start);
        let jitter = 0.4 * layout.cell_size;
        let mut state = EnvState::at_rest([cx + rng.gen_range(-jitter..jitter), cy + rng.gen_range(-jitter..jitter)]);
        let pick_goal = |rng: &mut rand_chacha::ChaCha8Rng, here: Option<CellIdx>| loop {
            let g = cells[rng.gen_range(0..cells.len())];
            if Some(g) != here {
                break g;
            }
        };
        let mut expert = Expert::new(layout, pick_goal(&mut rng, Some(start))).expect("spawn cells are free");
        for step_idx in 0..len {
            let action = expert.act(&state, EXPERT_NOISE_STD, &mut rng);
            let next = step(layout, &state, action, &mut rng);
            transitions.push(Transition {
                state: state.observation(),
                action,
                next_state: next.observation(),
                traj_id: traj as u32,
                step_idx: step_idx as u32,
            });
            state = next;
            let here = layout.cell_at(state.position[0], state.position[1]);
            if here == Some(expert.goal()) {
                expert = Expert::new(layout, pick_goal(&mut rng, here)).expect("spawn cells are free");
            }
        }
    }
    Dataset::new(layout.name.clone(), style, transitions)
}
