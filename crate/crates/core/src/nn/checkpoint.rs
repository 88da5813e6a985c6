//! `PROQC1` checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "PROQC1" | u32 blob_count | blob* | u32 crc32(all preceding bytes)
//! blob    = u16 name_len | name | u8 kind | u64 payload_len | payload
//! ```
//!
//! Blob kinds: 1 network (spec, f32 params, Adam moments), 2 trainable
//! vector (f32 values, Adam moments), 3 named f64 scalars, 4 f32 matrix,
//! 5 UTF-8 text.

use std::path::Path;

use super::adam::AdamState;
use super::matrix::Matrix;
use super::mlp::{Mlp, MlpSpec, OutputActivation, ParamSet};
use super::{Trainable, TrainableVec};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PROQC1";
const MAX_HIDDEN_LAYERS: u32 = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum Blob {
    Network(Trainable<f32>),
    Vector(TrainableVec<f32>),
    Scalars(Vec<(String, f64)>),
    Matrix(Matrix<f32>),
    Text(String),
}

impl Blob {
    fn kind(&self) -> u8 {
        match self {
            Blob::Network(_) => 1,
            Blob::Vector(_) => 2,
            Blob::Scalars(_) => 3,
            Blob::Matrix(_) => 4,
            Blob::Text(_) => 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    blobs: Vec<(String, Blob)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the blob called `name`.
    pub fn put(&mut self, name: &str, blob: Blob) {
        match self.blobs.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = blob,
            None => self.blobs.push((name.to_string(), blob)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Blob> {
        self.blobs.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blobs.iter().map(|(n, _)| n.as_str())
    }

    fn missing(name: &str, kind: &str) -> Error {
        Error::Incompatible(format!("checkpoint has no {kind} blob `{name}`"))
    }

    pub fn network(&self, name: &str) -> Result<&Trainable<f32>> {
        match self.get(name) {
            Some(Blob::Network(t)) => Ok(t),
            _ => Err(Self::missing(name, "network")),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&TrainableVec<f32>> {
        match self.get(name) {
            Some(Blob::Vector(t)) => Ok(t),
            _ => Err(Self::missing(name, "vector")),
        }
    }

    pub fn scalars(&self, name: &str) -> Result<&[(String, f64)]> {
        match self.get(name) {
            Some(Blob::Scalars(s)) => Ok(s),
            _ => Err(Self::missing(name, "scalars")),
        }
    }

    pub fn scalar(&self, blob: &str, key: &str) -> Result<f64> {
        self.scalars(blob)?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Incompatible(format!("scalar `{key}` missing from `{blob}`")))
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix<f32>> {
        match self.get(name) {
            Some(Blob::Matrix(m)) => Ok(m),
            _ => Err(Self::missing(name, "matrix")),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.get(name) {
            Some(Blob::Text(s)) => Ok(s),
            _ => Err(Self::missing(name, "text")),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(self.blobs.len() as u32);
        for (name, blob) in &self.blobs {
            w.u16(name.len() as u16);
            w.bytes(name.as_bytes());
            w.u8(blob.kind());
            let mut p = Writer::default();
            encode_payload(&mut p, blob);
            w.u64(p.buf.len() as u64);
            w.bytes(&p.buf);
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::format("checkpoint", "file too short"));
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([footer[0], footer[1], footer[2], footer[3]]);
        if crc32fast::hash(body) != stored {
            return Err(Error::format("checkpoint", "crc32 mismatch"));
        }
        let mut r = Reader::new(body, "checkpoint");
        if r.bytes(MAGIC.len())? != MAGIC {
            return Err(r.err("bad magic"));
        }
        let count = r.u32()?;
        // every blob needs at least 11 header bytes
        let count = r.count(count as u64, 11)?;
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = r.string(name_len)?;
            let kind = r.u8()?;
            let len = r.u64()?;
            let len = r.count(len, 1)?;
            let mut p = Reader::new(r.bytes(len)?, "checkpoint blob");
            let blob = decode_payload(&mut p, kind)?;
            p.finish()?;
            if ckpt.get(&name).is_some() {
                return Err(r.err(format!("duplicate blob `{name}`")));
            }
            ckpt.blobs.push((name, blob));
        }
        r.finish()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn encode_adam(w: &mut Writer, adam: &AdamState<f32>) {
    w.u64(adam.step);
    w.f64(adam.learning_rate);
    w.f64(adam.beta1);
    w.f64(adam.beta2);
    w.f64(adam.eps);
    w.f32s(&adam.first_moment);
    w.f32s(&adam.second_moment);
}

fn decode_adam(r: &mut Reader<'_>, len: usize) -> Result<AdamState<f32>> {
    let step = r.u64()?;
    let learning_rate = r.f64()?;
    let beta1 = r.f64()?;
    let beta2 = r.f64()?;
    let eps = r.f64()?;
    let first_moment = r.f32_vec(len)?;
    let second_moment = r.f32_vec(len)?;
    Ok(AdamState { first_moment, second_moment, step, learning_rate, beta1, beta2, eps })
}

fn encode_payload(w: &mut Writer, blob: &Blob) {
    match blob {
        Blob::Network(t) => {
            let s = &t.net.spec;
            w.u32(s.input_dim as u32);
            w.u32(s.hidden_sizes.len() as u32);
            for &h in &s.hidden_sizes {
                w.u32(h as u32);
            }
            w.u32(s.output_dim as u32);
            w.u8(s.use_residual as u8);
            w.u8(s.use_layer_norm as u8);
            w.f64(s.dropout_rate);
            w.u8(match s.output_activation {
                OutputActivation::Identity => 0,
                OutputActivation::Sigmoid => 1,
                OutputActivation::TanhMean => 2,
            });
            w.u64(t.net.params.len() as u64);
            w.f32s(t.net.params.values());
            encode_adam(w, &t.adam);
        }
        Blob::Vector(v) => {
            w.u64(v.params.len() as u64);
            w.f32s(v.params.values());
            encode_adam(w, &v.adam);
        }
        Blob::Scalars(items) => {
            w.u32(items.len() as u32);
            for (k, v) in items {
                w.u16(k.len() as u16);
                w.bytes(k.as_bytes());
                w.f64(*v);
            }
        }
        Blob::Matrix(m) => {
            w.u32(m.rows() as u32);
            w.u32(m.cols() as u32);
            w.f32s(m.as_slice());
        }
        Blob::Text(s) => {
            w.u32(s.len() as u32);
            w.bytes(s.as_bytes());
        }
    }
}

fn decode_payload(r: &mut Reader<'_>, kind: u8) -> Result<Blob> {
    Ok(match kind {
        1 => {
            let input_dim = r.u32()? as usize;
            let n_hidden = r.u32()?;
            if n_hidden > MAX_HIDDEN_LAYERS {
                return Err(r.err(format!("{n_hidden} hidden layers")));
            }
            let hidden_sizes = (0..n_hidden).map(|_| r.u32().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
            let output_dim = r.u32()? as usize;
            let use_residual = r.u8()? != 0;
            let use_layer_norm = r.u8()? != 0;
            let dropout_rate = r.f64()?;
            let output_activation = match r.u8()? {
                0 => OutputActivation::Identity,
                1 => OutputActivation::Sigmoid,
                2 => OutputActivation::TanhMean,
                other => return Err(r.err(format!("unknown output activation {other}"))),
            };
            let spec = MlpSpec {
                input_dim,
                hidden_sizes,
                output_dim,
                use_residual,
                use_layer_norm,
                dropout_rate,
                output_activation,
            };
            spec.validate()?;
            let n = r.u64()?;
            let n = r.count(n, 4)?;
            let params = ParamSet::new(r.f32_vec(n)?);
            if !params.is_finite() {
                return Err(Error::NonFinite("checkpoint parameters"));
            }
            let adam = decode_adam(r, n)?;
            let net = Mlp::from_params(spec, params)?;
            Blob::Network(Trainable { net, adam })
        }
        2 => {
            let n = r.u64()?;
            let n = r.count(n, 4)?;
            let values = r.f32_vec(n)?;
            let adam = decode_adam(r, n)?;
            Blob::Vector(TrainableVec { params: ParamSet::new(values), adam })
        }
        3 => {
            let n = r.u32()?;
            let n = r.count(n as u64, 10)?;
            let mut items = Vec::with_capacity(n);
            for _ in 0..n {
                let len = r.u16()? as usize;
                let k = r.string(len)?;
                items.push((k, r.f64()?));
            }
            Blob::Scalars(items)
        }
        4 => {
            let rows = r.u32()? as u64;
            let cols = r.u32()? as u64;
            let n = r.count(rows * cols, 4)?;
            let data = r.f32_vec(n)?;
            Blob::Matrix(Matrix::from_vec(rows as usize, cols as usize, data))
        }
        5 => {
            let n = r.u32()? as usize;
            Blob::Text(r.string(n)?)
        }
        other => return Err(r.err(format!("unknown blob kind {other}"))),
    })
}
