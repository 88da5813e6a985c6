//! Multilayer perceptrons with GELU hidden units, optional layer norm,
//! residual skips and inverted dropout, plus their exact reverse pass.
//!
//! Hidden block: `h = skip(x) + dropout(gelu(norm(x W + b)))`. The skip is
//! the identity when consecutive widths match and a bias-free linear
//! projection otherwise (always the case for the first hidden layer).

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use super::scalar::{gelu, gelu_grad, sigmoid, Scalar};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    /// `tanh` applied to the output, used for bounded action means.
    TanhMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    pub use_residual: bool,
    pub use_layer_norm: bool,
    pub dropout_rate: f64,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn plain(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_sizes,
            output_dim,
            use_residual: false,
            use_layer_norm: false,
            dropout_rate: 0.0,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() {
            return Err(Error::InvalidArgument("hidden_sizes must be non-empty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let at = offset;
            offset += n;
            at
        };
        let mut hidden = Vec::with_capacity(self.hidden_sizes.len());
        let mut in_dim = self.input_dim;
        for (l, &out_dim) in self.hidden_sizes.iter().enumerate() {
            let weight = take(in_dim * out_dim);
            let bias = take(out_dim);
            let norm = self.use_layer_norm.then(|| (take(out_dim), take(out_dim)));
            let skip = if !self.use_residual {
                Skip::None
            } else if l > 0 && in_dim == out_dim {
                Skip::Identity
            } else {
                Skip::Projection(take(in_dim * out_dim))
            };
            hidden.push(HiddenLayout { in_dim, out_dim, weight, bias, norm, skip });
            in_dim = out_dim;
        }
        let out_weight = take(in_dim * self.output_dim);
        let out_bias = take(self.output_dim);
        Layout { hidden, out_in: in_dim, out_weight, out_bias, total: offset }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Skip {
    None,
    Identity,
    /// Offset of an `in x out` projection matrix.
    Projection(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HiddenLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: usize,
    pub bias: usize,
    /// Offsets of (scale, offset) vectors.
    pub norm: Option<(usize, usize)>,
    pub skip: Skip,
}

/// Offsets of every weight block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub hidden: Vec<HiddenLayout>,
    pub out_in: usize,
    pub out_weight: usize,
    pub out_bias: usize,
    pub total: usize,
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Flat trainable parameters. Every mutation takes a fresh generation id so
/// tapes recorded against older values can be detected.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    values: Vec<T>,
    generation: u64,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(values: Vec<T>) -> Self {
        ParamSet { values, generation: next_generation() }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![T::zero(); len])
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        self.generation = next_generation();
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet::new(self.values.iter().map(|v| U::lit(v.as_f64())).collect())
    }

    /// Order-sensitive FNV-1a hash of the exact bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.as_f64().to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl<T: PartialEq> PartialEq for ParamSet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

struct HiddenCache<T> {
    input: Matrix<T>,
    /// Normalized pre-activations and per-row inverse std, when layer norm is on.
    norm: Option<(Matrix<T>, Vec<T>)>,
    act_in: Matrix<T>,
    mask: Option<Vec<T>>,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
pub struct Tape<T> {
    generation: u64,
    hidden: Vec<HiddenCache<T>>,
    last_hidden: Matrix<T>,
    output: Matrix<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }
}

pub struct MlpGrads<T> {
    pub params: Vec<T>,
    pub input: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub spec: MlpSpec,
    pub layout: Layout,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Mlp<T> {
    /// LeCun-normal weights, zero biases, unit norm scales.
    pub fn init(spec: MlpSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let mut values = vec![T::zero(); layout.total];
        let mut fill = |values: &mut [T], at: usize, fan_in: usize, fan_out: usize| {
            let std = (1.0 / fan_in as f64).sqrt();
            for v in &mut values[at..at + fan_in * fan_out] {
                let z: f64 = StandardNormal.sample(rng);
                *v = T::lit(z * std);
            }
        };
        for h in &layout.hidden {
            fill(&mut values, h.weight, h.in_dim, h.out_dim);
            if let Some((scale, _)) = h.norm {
                values[scale..scale + h.out_dim].fill(T::one());
            }
            if let Skip::Projection(p) = h.skip {
                fill(&mut values, p, h.in_dim, h.out_dim);
            }
        }
        fill(&mut values, layout.out_weight, layout.out_in, spec.output_dim);
        Ok(Mlp { spec, layout, params: ParamSet::new(values) })
    }

    /// Wraps explicit parameter values. Fails if the length does not match the spec.
    pub fn from_params(spec: MlpSpec, params: ParamSet<T>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch { expected: layout.total, got: params.len() });
        }
        Ok(Mlp { spec, layout, params })
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp { spec: self.spec.clone(), layout: self.layout.clone(), params: self.params.cast() }
    }

    /// Evaluation-mode forward pass without recording a tape.
    pub fn infer(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.run(x, None, false).map(|t| t.output)
    }

    /// Forward pass recording a tape. Dropout is active only when `train_rng`
    /// is provided.
    pub fn forward(&self, x: &Matrix<T>, train_rng: Option<&mut dyn RngCore>) -> Result<(Matrix<T>, Tape<T>)> {
        let tape = self.run(x, train_rng, true)?;
        Ok((tape.output.clone(), tape))
    }

    fn run(&self, x: &Matrix<T>, mut train_rng: Option<&mut dyn RngCore>, record: bool) -> Result<Tape<T>> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch { expected: self.spec.input_dim, got: x.cols() });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("network input"));
        }
        let p = self.params.values();
        let m = x.rows();
        let keep = 1.0 - self.spec.dropout_rate;
        let mut hidden = Vec::with_capacity(if record { self.layout.hidden.len() } else { 0 });
        let mut current = x.clone();
        for h in &self.layout.hidden {
            let (k, n) = (h.in_dim, h.out_dim);
            let mut pre = Matrix::zeros(m, n);
            matmul_into(current.as_slice(), &p[h.weight..h.weight + k * n], pre.as_mut_slice(), m, k, n, T::zero());
            let bias = &p[h.bias..h.bias + n];
            for i in 0..m {
                for (v, &b) in pre.row_mut(i).iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let (act_in, norm) = match h.norm {
                Some((scale, offset)) => {
                    let (normed, inv_std) = layer_norm(&pre);
                    let mut y = normed.clone();
                    for i in 0..m {
                        for (j, v) in y.row_mut(i).iter_mut().enumerate() {
                            *v = *v * p[scale + j] + p[offset + j];
                        }
                    }
                    (y, Some((normed, inv_std)))
                }
                None => (pre, None),
            };
            let mut out = act_in.map(gelu);
            let mask = match (train_rng.as_deref_mut(), self.spec.dropout_rate > 0.0) {
                (Some(rng), true) => {
                    let scale = T::lit(1.0 / keep);
                    let mask: Vec<T> = (0..m * n)
                        .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    for (v, &s) in out.as_mut_slice().iter_mut().zip(&mask) {
                        *v *= s;
                    }
                    Some(mask)
                }
                _ => None,
            };
            match h.skip {
                Skip::None => {}
                Skip::Identity => out.add_assign(&current),
                Skip::Projection(at) => {
                    matmul_into(current.as_slice(), &p[at..at + k * n], out.as_mut_slice(), m, k, n, T::one());
                }
            }
            let next = out;
            if record {
                hidden.push(HiddenCache { input: current, norm, act_in, mask });
            }
            current = next;
        }
        let (k, n) = (self.layout.out_in, self.spec.output_dim);
        let mut output = Matrix::zeros(m, n);
        matmul_into(
            current.as_slice(),
            &p[self.layout.out_weight..self.layout.out_weight + k * n],
            output.as_mut_slice(),
            m,
            k,
            n,
            T::zero(),
        );
        let bias = &p[self.layout.out_bias..self.layout.out_bias + n];
        for i in 0..m {
            for (v, &b) in output.row_mut(i).iter_mut().zip(bias) {
                *v += b;
                *v = match self.spec.output_activation {
                    OutputActivation::Identity => *v,
                    OutputActivation::Sigmoid => sigmoid(*v),
                    OutputActivation::TanhMean => v.tanh(),
                };
            }
        }
        Ok(Tape { generation: self.params.generation(), hidden, last_hidden: current, output })
    }

    /// Reverse pass: gradients of `sum(output_gradient * output)` with respect
    /// to the parameters and the network input.
    pub fn backward(&self, tape: &Tape<T>, output_gradient: &Matrix<T>) -> Result<MlpGrads<T>> {
        self.backward_impl(tape, output_gradient, true)
    }

    /// Like `backward`, but `logit_gradient` is taken with respect to the
    /// output layer before its activation. Lets callers use the closed form
    /// of e.g. a log-sigmoid gradient where the sigmoid itself saturates.
    pub fn backward_logits(&self, tape: &Tape<T>, logit_gradient: &Matrix<T>) -> Result<MlpGrads<T>> {
        self.backward_impl(tape, logit_gradient, false)
    }

    fn backward_impl(&self, tape: &Tape<T>, output_gradient: &Matrix<T>, through_activation: bool) -> Result<MlpGrads<T>> {
        if tape.generation != self.params.generation() || tape.hidden.len() != self.layout.hidden.len() {
            return Err(Error::StaleTape);
        }
        let m = tape.output.rows();
        let n = self.spec.output_dim;
        if output_gradient.rows() != m || output_gradient.cols() != n {
            return Err(Error::DimensionMismatch { expected: m * n, got: output_gradient.as_slice().len() });
        }
        let p = self.params.values();
        let mut grads = vec![T::zero(); self.layout.total];

        let mut dpre = output_gradient.clone();
        for (d, &y) in dpre.as_mut_slice().iter_mut().zip(tape.output.as_slice()).filter(|_| through_activation) {
            *d *= match self.spec.output_activation {
                OutputActivation::Identity => T::one(),
                OutputActivation::Sigmoid => y * (T::one() - y),
                OutputActivation::TanhMean => T::one() - y * y,
            };
        }
        let k = self.layout.out_in;
        let ow = self.layout.out_weight;
        matmul_tn_into(tape.last_hidden.as_slice(), dpre.as_slice(), &mut grads[ow..ow + k * n], m, k, n, T::zero());
        col_sum_into(&dpre, &mut grads[self.layout.out_bias..self.layout.out_bias + n]);
        let mut dh = Matrix::zeros(m, k);
        matmul_nt_into(dpre.as_slice(), &p[ow..ow + k * n], dh.as_mut_slice(), m, k, n, T::zero());

        for (h, cache) in self.layout.hidden.iter().zip(&tape.hidden).rev() {
            let (k, n) = (h.in_dim, h.out_dim);
            let mut dact = dh.clone();
            if let Some(mask) = &cache.mask {
                for (d, &s) in dact.as_mut_slice().iter_mut().zip(mask) {
                    *d *= s;
                }
            }
            for (d, &a) in dact.as_mut_slice().iter_mut().zip(cache.act_in.as_slice()) {
                *d *= gelu_grad(a);
            }
            let dpre = match (h.norm, &cache.norm) {
                (Some((scale, offset)), Some((normed, inv_std))) => {
                    for i in 0..m {
                        for (j, (&d, &xh)) in dact.row(i).iter().zip(normed.row(i)).enumerate() {
                            grads[scale + j] += d * xh;
                            grads[offset + j] += d;
                        }
                    }
                    let mut dnorm = dact;
                    for i in 0..m {
                        for (j, d) in dnorm.row_mut(i).iter_mut().enumerate() {
                            *d *= p[scale + j];
                        }
                    }
                    layer_norm_backward(&dnorm, normed, inv_std)
                }
                _ => dact,
            };
            matmul_tn_into(cache.input.as_slice(), dpre.as_slice(), &mut grads[h.weight..h.weight + k * n], m, k, n, T::zero());
            col_sum_into(&dpre, &mut grads[h.bias..h.bias + n]);
            let mut dx = Matrix::zeros(m, k);
            matmul_nt_into(dpre.as_slice(), &p[h.weight..h.weight + k * n], dx.as_mut_slice(), m, k, n, T::zero());
            match h.skip {
                Skip::None => {}
                Skip::Identity => dx.add_assign(&dh),
                Skip::Projection(at) => {
                    matmul_tn_into(cache.input.as_slice(), dh.as_slice(), &mut grads[at..at + k * n], m, k, n, T::zero());
                    matmul_nt_into(dh.as_slice(), &p[at..at + k * n], dx.as_mut_slice(), m, k, n, T::one());
                }
            }
            dh = dx;
        }
        Ok(MlpGrads { params: grads, input: dh })
    }
}

fn col_sum_into<T: Scalar>(m: &Matrix<T>, out: &mut [T]) {
    out.fill(T::zero());
    for i in 0..m.rows() {
        for (o, &v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
}

fn layer_norm<T: Scalar>(x: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let n = x.cols() as f64;
    let mut out = x.clone();
    let mut inv_stds = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        let inv_std = T::lit(1.0 / (var + LAYER_NORM_EPS).sqrt());
        let mean = T::lit(mean);
        for v in row.iter_mut() {
            *v = (*v - mean) * inv_std;
        }
        inv_stds.push(inv_std);
    }
    (out, inv_stds)
}

fn layer_norm_backward<T: Scalar>(dnorm: &Matrix<T>, normed: &Matrix<T>, inv_std: &[T]) -> Matrix<T> {
    let n = T::lit(dnorm.cols() as f64);
    let mut dx = Matrix::zeros(dnorm.rows(), dnorm.cols());
    for i in 0..dnorm.rows() {
        let (d, xh) = (dnorm.row(i), normed.row(i));
        let sum_d = T::lit(d.iter().map(|v| v.as_f64()).sum::<f64>());
        let sum_dx = T::lit(d.iter().zip(xh).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>());
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            *o = inv_std[i] / n * (n * d[j] - sum_d - xh[j] * sum_dx);
        }
    }
    dx
}
