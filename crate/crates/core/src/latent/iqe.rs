//! Interval quasimetric embeddings with max-mean reduction.
//!
//! An embedding of width `N * M` is read as `N` components of `M` coordinates.
//! Component `i` of `d(x, y)` is the length of the union of the intervals
//! `[x_ij, max(x_ij, y_ij)]`, and the components are mixed as
//! `alpha * max + (1 - alpha) * mean` with `alpha = sigmoid(alpha_raw)`.

use crate::nn::{sigmoid, Matrix, Mlp, Scalar};

pub const N_COMPONENTS: usize = 64;
pub const COMPONENT_SIZE: usize = 8;

/// Lebesgue measure of `union_j [x_j, max(x_j, y_j)]`, by sorting the
/// non-degenerate intervals on their start and sweeping.
pub fn interval_union_measure<T: Scalar>(x: &[T], y: &[T]) -> T {
    sweep(x, y, |_, _| {})
}

/// Measure plus its gradient, scaled by `upstream` and accumulated into
/// `gx`/`gy`. Each merged run contributes `-1` to the coordinate that starts
/// it and `+1` to the one that ends it.
pub fn interval_union_measure_backward<T: Scalar>(x: &[T], y: &[T], upstream: T, gx: &mut [T], gy: &mut [T]) -> T {
    sweep(x, y, |start, end| {
        gx[start] -= upstream;
        gy[end] += upstream;
    })
}

fn sweep<T: Scalar>(x: &[T], y: &[T], on_run: impl FnMut(usize, usize)) -> T {
    debug_assert_eq!(x.len(), y.len());
    const INLINE: usize = 16;
    if x.len() <= INLINE {
        let mut buf = [(T::zero(), T::zero(), 0u32); INLINE];
        let mut n = 0;
        for (j, (&a, &b)) in x.iter().zip(y).enumerate() {
            if b > a {
                buf[n] = (a, b, j as u32);
                n += 1;
            }
        }
        sweep_sorted(&mut buf[..n], on_run)
    } else {
        let mut items: Vec<(T, T, u32)> =
            x.iter().zip(y).enumerate().filter(|(_, (a, b))| b > a).map(|(j, (&a, &b))| (a, b, j as u32)).collect();
        sweep_sorted(&mut items, on_run)
    }
}

/// Sorts `(start, end, index)` triples by start and merges overlapping runs.
#[inline]
fn sweep_sorted<T: Scalar>(items: &mut [(T, T, u32)], mut on_run: impl FnMut(usize, usize)) -> T {
    if items.is_empty() {
        return T::zero();
    }
    // insertion sort: M is small
    for i in 1..items.len() {
        let cur = items[i];
        let mut k = i;
        while k > 0 && items[k - 1].0 > cur.0 {
            items[k] = items[k - 1];
            k -= 1;
        }
        items[k] = cur;
    }
    let mut total = T::zero();
    let (mut s, mut e, mut si, mut ei) = (items[0].0, items[0].1, items[0].2, items[0].2);
    for &(a, b, j) in &items[1..] {
        if a <= e {
            if b > e {
                e = b;
                ei = j;
            }
        } else {
            total += e - s;
            on_run(si as usize, ei as usize);
            (s, e, si, ei) = (a, b, j, j);
        }
    }
    total += e - s;
    on_run(si as usize, ei as usize);
    total
}

/// Optimal 19-comparator sorting network on 8 inputs.
const NETWORK8: [(usize, usize); 19] = [
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
    (0, 1), (2, 3), (4, 5), (6, 7),
    (2, 4), (3, 5),
    (1, 4), (3, 6),
    (1, 2), (3, 4), (5, 6),
];
const LANES: usize = 8;

/// Eight components of size eight at once, one per lane, sorted by interval
/// start with a branch-free network. Lane-major `[coordinate][lane]` arrays.
struct Block8<T> {
    start: [[T; LANES]; 8],
    end: [[T; LANES]; 8],
    index: [[u32; LANES]; 8],
}

impl<T: Scalar> Block8<T> {
    #[inline]
    fn load(ex: &[T], ey: &[T], c0: usize) -> Self {
        let mut b = Block8 { start: [[T::zero(); LANES]; 8], end: [[T::zero(); LANES]; 8], index: [[0; LANES]; 8] };
        for l in 0..LANES {
            let base = (c0 + l) * 8;
            for j in 0..8 {
                let (a, y) = (ex[base + j], ey[base + j]);
                b.start[j][l] = a;
                b.end[j][l] = if y > a { y } else { a };
                b.index[j][l] = j as u32;
            }
        }
        for &(p, q) in &NETWORK8 {
            for l in 0..LANES {
                let (sp, sq) = (b.start[p][l], b.start[q][l]);
                let swap = sq < sp;
                let (ep, eq) = (b.end[p][l], b.end[q][l]);
                let (ip, iq) = (b.index[p][l], b.index[q][l]);
                b.start[p][l] = if swap { sq } else { sp };
                b.start[q][l] = if swap { sp } else { sq };
                b.end[p][l] = if swap { eq } else { ep };
                b.end[q][l] = if swap { ep } else { eq };
                b.index[p][l] = if swap { iq } else { ip };
                b.index[q][l] = if swap { ip } else { iq };
            }
        }
        b
    }

    /// `sum_j max(0, end_j - max(start_j, R_j))` with `R_j` the largest end
    /// among earlier intervals.
    #[inline]
    fn measures(&self) -> [T; LANES] {
        let mut total = [T::zero(); LANES];
        let mut reach = self.start[0];
        for j in 0..8 {
            for l in 0..LANES {
                let lo = if self.start[j][l] > reach[l] { self.start[j][l] } else { reach[l] };
                let gain = self.end[j][l] - lo;
                total[l] += if gain > T::zero() { gain } else { T::zero() };
                reach[l] = if self.end[j][l] > reach[l] { self.end[j][l] } else { reach[l] };
            }
        }
        total
    }

    /// Scatters `w[lane] * d measure` into `gx`/`gy`: each positive term
    /// credits its end (a `y` coordinate) and debits its start, or the end
    /// that reached furthest so far.
    #[inline]
    fn backward(&self, c0: usize, w: &[T; LANES], gx: &mut [T], gy: &mut [T]) {
        let zero = T::zero();
        // per sorted slot: weight on its own end, on its own start, on the reach end
        let mut own_end = [[zero; LANES]; 8];
        let mut own_start = [[zero; LANES]; 8];
        let mut via_reach = [[zero; LANES]; 8];
        let mut reach_idx = [[0u32; LANES]; 8];
        let mut reach = self.start[0];
        let mut ridx = self.index[0];
        for j in 0..8 {
            for l in 0..LANES {
                let (s, e) = (self.start[j][l], self.end[j][l]);
                let from_start = j == 0 || s > reach[l];
                let lo = if from_start { s } else { reach[l] };
                let wl = if e > lo { w[l] } else { zero };
                own_end[j][l] = wl;
                own_start[j][l] = if from_start { wl } else { zero };
                via_reach[j][l] = if from_start { zero } else { wl };
                reach_idx[j][l] = ridx[l];
                let further = j == 0 || e > reach[l];
                reach[l] = if further { e } else { reach[l] };
                ridx[l] = if further { self.index[j][l] } else { ridx[l] };
            }
        }
        for l in 0..LANES {
            let base = (c0 + l) * 8;
            for j in 0..8 {
                let i = base + self.index[j][l] as usize;
                gy[i] += own_end[j][l];
                gx[i] -= own_start[j][l];
                gy[base + reach_idx[j][l] as usize] -= via_reach[j][l];
            }
        }
    }
}

/// Per-component measures of a pair of embeddings.
pub fn components<T: Scalar>(ex: &[T], ey: &[T], m: usize) -> Vec<T> {
    ex.chunks(m).zip(ey.chunks(m)).map(|(a, b)| interval_union_measure(a, b)).collect()
}

/// Max-mean mix of component values.
pub fn maxmean<T: Scalar>(comps: &[T], alpha: T) -> T {
    let max = comps.iter().copied().fold(T::zero(), T::max);
    let mean = T::lit(comps.iter().map(|c| c.as_f64()).sum::<f64>() / comps.len() as f64);
    alpha * max + (T::one() - alpha) * mean
}

/// An embedding row with each component's coordinates pre-sorted. Interval
/// starts come from the first argument of `d`, so a row that appears as `x`
/// against many partners is sorted once.
#[derive(Clone, Debug)]
pub struct SortedRow<T> {
    starts: Vec<T>,
    order: Vec<u16>,
    m: usize,
}

impl<T: Scalar> SortedRow<T> {
    pub fn new(row: &[T], m: usize) -> Self {
        let mut order: Vec<u16> = Vec::with_capacity(row.len());
        for c in 0..row.len() / m {
            let base = order.len();
            order.extend(0..m as u16);
            order[base..].sort_by(|&a, &b| {
                row[c * m + a as usize].partial_cmp(&row[c * m + b as usize]).unwrap_or(std::cmp::Ordering::Equal)
            });
        }
        let starts = order.iter().enumerate().map(|(p, &k)| row[p / m * m + k as usize]).collect();
        SortedRow { starts, order, m }
    }

    /// Measure of component `c` against partner row `y`.
    #[inline]
    fn component(&self, c: usize, y: &[T]) -> T {
        let m = self.m;
        let base = c * m;
        let mut total = T::zero();
        let mut reach = self.starts[base];
        for t in base..base + m {
            let s = self.starts[t];
            let yk = y[base + self.order[t] as usize];
            let e = if yk > s { yk } else { s };
            let lo = if s > reach { s } else { reach };
            let gain = e - lo;
            total += if gain > T::zero() { gain } else { T::zero() };
            reach = if e > reach { e } else { reach };
        }
        total
    }

    /// Measure of component `c` plus its derivative with respect to the
    /// component's coordinates of this row (`cx`) and of `y` (`cy`). Each
    /// derivative is a small integer; both slices are overwritten.
    #[inline]
    fn component_with_coeffs(&self, c: usize, y: &[T], cx: &mut [i8], cy: &mut [i8]) -> T {
        let m = self.m;
        let base = c * m;
        cx.iter_mut().for_each(|v| *v = 0);
        cy.iter_mut().for_each(|v| *v = 0);
        let mut total = T::zero();
        let mut reach = self.starts[base];
        let mut reach_k = self.order[base] as usize;
        for t in base..base + m {
            let s = self.starts[t];
            let k = self.order[t] as usize;
            let yk = y[base + k];
            let e = if yk > s { yk } else { s };
            let from_start = t == base || s > reach;
            let lo = if from_start { s } else { reach };
            let live = e > lo;
            if live {
                total += e - lo;
            }
            let wv = live as i8;
            let ws = (live && from_start) as i8;
            cy[k] += wv;
            cx[k] -= ws;
            cy[reach_k] -= wv - ws;
            let further = t == base || e > reach;
            reach = if further { e } else { reach };
            reach_k = if further { k } else { reach_k };
        }
        total
    }
}

/// Learned quasimetric: an MLP embedder into `N * M` coordinates plus the
/// raw mixing weight.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasimetricHead<T> {
    pub embedder: Mlp<T>,
    pub alpha_raw: T,
    pub component_size: usize,
}

/// Gradients of a weighted sum of pair distances.
pub struct PairGrads<T> {
    pub ex: Matrix<T>,
    pub ey: Matrix<T>,
    pub alpha_raw: T,
}

impl<T: Scalar> QuasimetricHead<T> {
    pub fn new(embedder: Mlp<T>, alpha_raw: T, component_size: usize) -> crate::Result<Self> {
        if component_size == 0 || embedder.spec.output_dim % component_size != 0 {
            return Err(crate::Error::InvalidArgument(format!(
                "embedder width {} is not a multiple of component size {component_size}",
                embedder.spec.output_dim
            )));
        }
        Ok(QuasimetricHead { embedder, alpha_raw, component_size })
    }

    pub fn alpha(&self) -> T {
        sigmoid(self.alpha_raw)
    }

    pub fn n_components(&self) -> usize {
        self.embedder.spec.output_dim / self.component_size
    }

    pub fn cast<U: Scalar>(&self) -> QuasimetricHead<U> {
        QuasimetricHead {
            embedder: self.embedder.cast(),
            alpha_raw: U::lit(self.alpha_raw.as_f64()),
            component_size: self.component_size,
        }
    }

    pub fn embed(&self, latents: &Matrix<T>) -> crate::Result<Matrix<T>> {
        self.embedder.infer(latents)
    }

    /// Distance between two embedding rows.
    pub fn distance_embedded(&self, ex: &[T], ey: &[T]) -> T {
        let m = self.component_size;
        if m == 8 && (ex.len() / 8) % LANES == 0 {
            let (mut max, mut sum) = (T::zero(), 0.0f64);
            for c0 in (0..ex.len() / 8).step_by(LANES) {
                for c in Block8::load(ex, ey, c0).measures() {
                    max = max.max(c);
                    sum += c.as_f64();
                }
            }
            let alpha = self.alpha();
            return alpha * max + (T::one() - alpha) * T::lit(sum / (ex.len() / 8) as f64);
        }
        let (mut max, mut sum, mut n) = (T::zero(), 0.0f64, 0usize);
        for (a, b) in ex.chunks_exact(m).zip(ey.chunks_exact(m)) {
            let c = interval_union_measure(a, b);
            max = max.max(c);
            sum += c.as_f64();
            n += 1;
        }
        let alpha = self.alpha();
        alpha * max + (T::one() - alpha) * T::lit(sum / n as f64)
    }

    /// Distance between two latents (embeds both).
    pub fn distance(&self, zx: &[T], zy: &[T]) -> crate::Result<T> {
        let e = self.embed(&Matrix::from_rows(&[zx, zy]))?;
        Ok(self.distance_embedded(e.row(0), e.row(1)))
    }

    /// Row-aligned distances `d(ex[i], ey[i])`.
    pub fn pair_distances(&self, ex: &Matrix<T>, ey: &Matrix<T>) -> Vec<T> {
        (0..ex.rows()).map(|i| self.distance_embedded(ex.row(i), ey.row(i))).collect()
    }

    /// All ordered-pair distances `d(e[i], e[j])`, row-major.
    pub fn distance_matrix(&self, e: &Matrix<T>) -> Vec<T> {
        let n = e.rows();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            let sorted = SortedRow::new(e.row(i), self.component_size);
            for j in 0..n {
                if i != j {
                    out[i * n + j] = self.distance_sorted(&sorted, e.row(j));
                }
            }
        }
        out
    }

    /// `d(x, y)` with `x` pre-sorted.
    pub fn distance_sorted(&self, x: &SortedRow<T>, y: &[T]) -> T {
        let n = y.len() / self.component_size;
        let (mut max, mut sum) = (T::zero(), 0.0f64);
        for c in 0..n {
            let v = x.component(c, y);
            max = max.max(v);
            sum += v.as_f64();
        }
        let alpha = self.alpha();
        alpha * max + (T::one() - alpha) * T::lit(sum / n as f64)
    }

    /// Ordered-pair distances of the rows of `e` together with the gradient
    /// of `sum_{i != j} f(d_ij)`, where `upstream(d)` is `f'(d)`. Returns the
    /// row-major distance matrix, the embedding gradient and the mixing-weight
    /// gradient.
    pub fn matrix_value_backward(&self, e: &Matrix<T>, upstream: impl Fn(T) -> T) -> (Vec<T>, Matrix<T>, T) {
        let (n, w) = (e.rows(), e.cols());
        let nc = w / self.component_size;
        let alpha = self.alpha();
        let mut dist = vec![T::zero(); n * n];
        let mut g = Matrix::zeros(n, w);
        let mut gx = vec![T::zero(); w];
        let m = self.component_size;
        let mut cx = vec![0i8; w];
        let mut cy = vec![0i8; w];
        let mut galpha = T::zero();
        for i in 0..n {
            let sorted = SortedRow::new(e.row(i), m);
            gx.iter_mut().for_each(|v| *v = T::zero());
            for j in 0..n {
                if i == j {
                    continue;
                }
                let y = e.row(j);
                let (mut arg, mut max, mut sum) = (0, T::zero(), 0.0f64);
                for c in 0..nc {
                    let r = c * m..(c + 1) * m;
                    let v = sorted.component_with_coeffs(c, y, &mut cx[r.clone()], &mut cy[r]);
                    if v > max || c == 0 {
                        (arg, max) = (c, v);
                    }
                    sum += v.as_f64();
                }
                let mean = T::lit(sum / nc as f64);
                let d = alpha * max + (T::one() - alpha) * mean;
                dist[i * n + j] = d;
                let u = upstream(d);
                if u == T::zero() {
                    continue;
                }
                galpha += u * (max - mean) * alpha * (T::one() - alpha);
                let share = u * (T::one() - alpha) / T::lit(nc as f64);
                let gj = g.row_mut(j);
                for ((gxk, gyk), (&a, &b)) in gx.iter_mut().zip(gj.iter_mut()).zip(cx.iter().zip(&cy)) {
                    *gxk += share * <T as From<i8>>::from(a);
                    *gyk += share * <T as From<i8>>::from(b);
                }
                let (r, top) = (arg * m..(arg + 1) * m, u * alpha);
                for ((gxk, gyk), (&a, &b)) in gx[r.clone()].iter_mut().zip(&mut gj[r.clone()]).zip(cx[r.clone()].iter().zip(&cy[r])) {
                    *gxk += top * <T as From<i8>>::from(a);
                    *gyk += top * <T as From<i8>>::from(b);
                }
            }
            for (a, &b) in g.row_mut(i).iter_mut().zip(&gx) {
                *a += b;
            }
        }
        (dist, g, galpha)
    }

    /// Gradient of `sum_i upstream[i] * d(ex[i], ey[i])`.
    pub fn pair_backward(&self, ex: &Matrix<T>, ey: &Matrix<T>, upstream: &[T]) -> PairGrads<T> {
        let mut gex = Matrix::zeros(ex.rows(), ex.cols());
        let mut gey = Matrix::zeros(ey.rows(), ey.cols());
        let mut galpha = T::zero();
        for (i, &u) in upstream.iter().enumerate() {
            if u == T::zero() {
                continue;
            }
            galpha += self.single_backward(ex.row(i), ey.row(i), u, gex.row_mut(i), gey.row_mut(i));
        }
        PairGrads { ex: gex, ey: gey, alpha_raw: galpha }
    }

    /// Accumulates `upstream * dd/d(ex, ey)` and returns `upstream * dd/d alpha_raw`.
    pub fn single_backward(&self, ex: &[T], ey: &[T], upstream: T, gx: &mut [T], gy: &mut [T]) -> T {
        self.value_backward(ex, ey, |_| upstream, gx, gy).1
    }

    /// Distance `d` of one pair plus the backward pass for the upstream
    /// gradient `upstream(d)`. Returns `(d, upstream * dd/d alpha_raw)`.
    pub fn value_backward(
        &self,
        ex: &[T],
        ey: &[T],
        upstream: impl FnOnce(T) -> T,
        gx: &mut [T],
        gy: &mut [T],
    ) -> (T, T) {
        let m = self.component_size;
        let alpha = self.alpha();
        if m == 8 && (ex.len() / 8) % LANES == 0 {
            let n = ex.len() / 8;
            let blocks: Vec<Block8<T>> = (0..n).step_by(LANES).map(|c0| Block8::load(ex, ey, c0)).collect();
            let comps: Vec<[T; LANES]> = blocks.iter().map(Block8::measures).collect();
            let (mut arg, mut max, mut sum) = (0, comps[0][0], 0.0f64);
            for (b, cs) in comps.iter().enumerate() {
                for (l, &c) in cs.iter().enumerate() {
                    if c > max {
                        (arg, max) = (b * LANES + l, c);
                    }
                    sum += c.as_f64();
                }
            }
            let mean = T::lit(sum / n as f64);
            let d = alpha * max + (T::one() - alpha) * mean;
            let u = upstream(d);
            if u == T::zero() {
                return (d, T::zero());
            }
            let share = u * (T::one() - alpha) / T::lit(n as f64);
            for (b, block) in blocks.iter().enumerate() {
                let mut w = [share; LANES];
                if arg / LANES == b {
                    w[arg % LANES] += u * alpha;
                }
                block.backward(b * LANES, &w, gx, gy);
            }
            return (d, u * (max - mean) * alpha * (T::one() - alpha));
        }
        let comps = components(ex, ey, m);
        let n = comps.len();
        let (mut arg, mut max) = (0, comps[0]);
        for (i, &c) in comps.iter().enumerate() {
            if c > max {
                (arg, max) = (i, c);
            }
        }
        let mean = T::lit(comps.iter().map(|c| c.as_f64()).sum::<f64>() / n as f64);
        let d = alpha * max + (T::one() - alpha) * mean;
        let u = upstream(d);
        if u == T::zero() {
            return (d, T::zero());
        }
        let share = u * (T::one() - alpha) / T::lit(n as f64);
        for i in 0..n {
            let w = if i == arg { share + u * alpha } else { share };
            let r = i * m..(i + 1) * m;
            interval_union_measure_backward(&ex[r.clone()], &ey[r.clone()], w, &mut gx[r.clone()], &mut gy[r]);
        }
        (d, u * (max - mean) * alpha * (T::one() - alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn network_sorts_every_binary_input() {
        for bits in 0u32..256 {
            let mut v: Vec<u32> = (0..8).map(|i| (bits >> i) & 1).collect();
            for &(p, q) in &NETWORK8 {
                if v[q] < v[p] {
                    v.swap(p, q);
                }
            }
            assert!(v.windows(2).all(|w| w[0] <= w[1]), "{bits:08b}");
        }
    }

    #[test]
    fn blocked_path_matches_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = MlpSpec::plain(2, vec![4], 128);
        let net = Mlp::<f64>::init(spec, &mut rng).unwrap();
        let head = QuasimetricHead::new(net, 0.4, 8).unwrap();
        for trial in 0..200 {
            // even trials use coarse values so ties and degenerate intervals occur
            let mut draw = || {
                if trial % 2 == 0 {
                    rng.gen_range(-8i32..8) as f64 * 0.25
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            };
            let ex: Vec<f64> = (0..128).map(|_| draw()).collect();
            let ey: Vec<f64> = (0..128).map(|_| draw()).collect();
            let fast = head.distance_embedded(&ex, &ey);
            let slow = maxmean(&components(&ex, &ey, 8), head.alpha());
            assert!((fast - slow).abs() < 1e-12);
            let (mut g1x, mut g1y) = (vec![0.0; 128], vec![0.0; 128]);
            let a1 = head.single_backward(&ex, &ey, 1.3, &mut g1x, &mut g1y);
            let comps = components(&ex, &ey, 8);
            let max = comps.iter().copied().fold(0.0, f64::max);
            if comps.iter().filter(|&&c| c == max).count() > 1 {
                continue;
            }
            let arg = comps.iter().position(|&c| c == max).unwrap();
            let (mut g2x, mut g2y) = (vec![0.0; 128], vec![0.0; 128]);
            for i in 0..16 {
                let w = 1.3 * (1.0 - head.alpha()) / 16.0 + if i == arg { 1.3 * head.alpha() } else { 0.0 };
                let r = i * 8..(i + 1) * 8;
                interval_union_measure_backward(&ex[r.clone()], &ey[r.clone()], w, &mut g2x[r.clone()], &mut g2y[r]);
            }
            if trial % 2 == 1 {
                for k in 0..128 {
                    assert!((g1x[k] - g2x[k]).abs() < 1e-12 && (g1y[k] - g2y[k]).abs() < 1e-12, "trial {trial} coord {k}");
                }
            }
            assert!(a1.is_finite());
        }
    }

    #[test]
    fn presorted_matrix_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, w) in [(8usize, 48usize), (6, 48), (8, 64), (8, 128)] {
            let net = Mlp::<f64>::init(MlpSpec::plain(3, vec![8], w), &mut rng).unwrap();
            let head = QuasimetricHead::new(net.clone(), -0.7, m).unwrap();
            let e = Matrix::from_vec(5, w, (0..5 * w).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let up = |d: f64| 0.5 - 2.0 * d;
            let (dist, g, ga) = head.matrix_value_backward(&e, up);
            for (a, b) in dist.iter().zip(head.distance_matrix(&e)) {
                assert!((a - b).abs() < 1e-12);
            }
            let mut g2 = Matrix::zeros(5, w);
            let mut ga2 = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    if i == j {
                        continue;
                    }
                    let d = head.distance_embedded(e.row(i), e.row(j));
                    assert!((d - dist[i * 5 + j]).abs() < 1e-12);
                    let (mut gx, mut gy) = (vec![0.0; w], vec![0.0; w]);
                    ga2 += head.single_backward(e.row(i), e.row(j), up(d), &mut gx, &mut gy);
                    for k in 0..w {
                        g2.set(i, k, g2.get(i, k) + gx[k]);
                        g2.set(j, k, g2.get(j, k) + gy[k]);
                    }
                }
            }
            assert!((ga - ga2).abs() < 1e-10);
            for (a, b) in g.as_slice().iter().zip(g2.as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(interval_union_measure(&[0.3f64, -1.0], &[0.3, -1.0]), 0.0);
        assert_eq!(interval_union_measure(&[0.0f64, 1.0], &[2.0, 0.5]), 2.0);
        assert_eq!(interval_union_measure(&[0.0f64, 3.0], &[1.0, 5.0]), 3.0);
        assert_eq!(maxmean(&[2.0f64, 4.0], 0.5), 3.5);
    }

    #[test]
    fn measure_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (mut gx, mut gy) = (vec![0.0; 8], vec![0.0; 8]);
            interval_union_measure_backward(&x, &y, 1.0, &mut gx, &mut gy);
            let h = 1e-7;
            for j in 0..8 {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let fd = (interval_union_measure(&xp, &y) - interval_union_measure(&xm, &y)) / (2.0 * h);
                assert!((fd - gx[j]).abs() < 1e-6);
                let mut yp = y.clone();
                yp[j] += h;
                let mut ym = y.clone();
                ym[j] -= h;
                let fd = (interval_union_measure(&x, &yp) - interval_union_measure(&x, &ym)) / (2.0 * h);
                assert!((fd - gy[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn head_requires_divisible_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = Mlp::<f64>::init(MlpSpec::plain(4, vec![8], 12), &mut rng).unwrap();
        assert!(QuasimetricHead::new(emb.clone(), 0.0, 8).is_err());
        let head = QuasimetricHead::new(emb, 0.0, 4).unwrap();
        assert_eq!(head.n_components(), 3);
        assert_eq!(head.alpha(), 0.5);
        let z = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(head.distance(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn crafted_embeddings_are_asymmetric() {
        let emb = Mlp::<f64>::init(MlpSpec::plain(1, vec![1], 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let head = QuasimetricHead::new(emb, 0.0, 2).unwrap();
        let (a, b) = ([0.0, 0.0], [1.0, -3.0]);
        assert_eq!(head.distance_embedded(&a, &b), 1.0);
        assert_eq!(head.distance_embedded(&b, &a), 3.0);
    }
}
