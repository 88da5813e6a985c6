//! Finite-difference checks at f64. Each check returns the worst relative
//! error over its probes.

use std::cell::Cell;

use proq::actor::{policy_spec, PolicyHead};
use proq::latent::{qrl_step, vicreg_covariance, vicreg_variance, DistDuals, QuasimetricHead};
use proq::nn::{rng_stream, Matrix, Mlp, MlpSpec};
use proq::ood::{ood_logit_grads, ood_loss, psi_spec};
use proq::orchestrator::model::{dhead_spec, phi_spec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
const PROBES: usize = 120;

/// Compares `analytic` against central differences of `f` at up to
/// `PROBES` random coordinates of `x`.
fn check(name: &str, x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64, rng: &mut ChaCha8Rng) {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length");
    let coords: Vec<usize> = if x.len() <= PROBES {
        (0..x.len()).collect()
    } else {
        (0..PROBES).map(|_| rng.gen_range(0..x.len())).collect()
    };
    let mut worst = 0.0f64;
    for i in coords {
        let mut p = x.to_vec();
        p[i] = x[i] + H;
        let up = f(&p);
        p[i] = x[i] - H;
        let down = f(&p);
        let numeric = (up - down) / (2.0 * H);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-5);
        if err > worst {
            worst = err;
        }
    }
    WORST.with(|w| w.set(w.get().max(worst)));
    if worst > TOL {
        eprintln!("{name}: relative error {worst:.2e}");
    }
}

thread_local! {
    static WORST: Cell<f64> = const { Cell::new(0.0) };
}

/// Runs `checks` and returns the worst relative error they saw.
pub fn worst_error(checks: impl FnOnce()) -> f64 {
    WORST.with(|w| w.set(0.0));
    checks();
    WORST.with(|w| w.get())
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

fn net(spec: MlpSpec, rng: &mut ChaCha8Rng) -> Mlp<f64> {
    Mlp::init(spec, rng).unwrap()
}

fn with_params(m: &Mlp<f64>, p: &[f64]) -> Mlp<f64> {
    let mut m = m.clone();
    m.params.values_mut().copy_from_slice(p);
    m
}

fn weighted_sum(out: &Matrix<f64>, c: &Matrix<f64>) -> f64 {
    out.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
}

/// Parameter and input gradients of `sum c * net(x)`.
fn check_network(name: &str, spec: MlpSpec, input_scale: f64, rng: &mut ChaCha8Rng) {
    let n = net(spec.clone(), rng);
    let x = random_matrix(6, spec.input_dim, input_scale, rng);
    let c = random_matrix(6, spec.output_dim, 1.0, rng);
    let (out, tape) = n.forward(&x, None).unwrap();
    let g = n.backward(&tape, &c).unwrap();
    let p0 = n.params.values().to_vec();
    check(&format!("{name} params"), &p0, &g.params, |p| weighted_sum(&with_params(&n, p).infer(&x).unwrap(), &c), rng);
    let cols = x.cols();
    check(
        &format!("{name} input"),
        x.as_slice(),
        g.input.as_slice(),
        |v| weighted_sum(&n.infer(&Matrix::from_vec(6, cols, v.to_vec())).unwrap(), &c),
        rng,
    );
    assert_eq!(out.rows(), 6);
}

pub fn encoder_gradients() {
    let mut rng = rng_stream(1, 0);
    check_network("encoder", phi_spec(vec![24, 24, 24]), 10.0, &mut rng);
}

pub fn classifier_gradients() {
    let mut rng = rng_stream(2, 0);
    check_network("classifier", psi_spec(vec![24, 24]), 2.0, &mut rng);
    // logit-space backward
    let n = net(psi_spec(vec![24, 24]), &mut rng);
    let x = random_matrix(6, 16, 2.0, &mut rng);
    let c = random_matrix(6, 1, 1.0, &mut rng);
    let (_, tape) = n.forward(&x, None).unwrap();
    let g = n.backward_logits(&tape, &c).unwrap();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    check(
        "classifier logits",
        n.params.values(),
        &g.params,
        |p| {
            let out = with_params(&n, p).infer(&x).unwrap();
            out.as_slice().iter().zip(c.as_slice()).map(|(&q, &w)| w * logit(q)).sum()
        },
        &mut rng,
    );
}

pub fn policy_network_gradients() {
    let mut rng = rng_stream(3, 0);
    check_network("policy", policy_spec(vec![24, 24], 0.0), 2.0, &mut rng);
}

fn random_head(rng: &mut ChaCha8Rng) -> QuasimetricHead<f64> {
    QuasimetricHead::new(net(dhead_spec(vec![24, 24], 64), rng), 0.4, 8).unwrap()
}

fn head_with(h: &QuasimetricHead<f64>, p: &[f64]) -> QuasimetricHead<f64> {
    let n = h.embedder.params.len();
    let mut h = h.clone();
    h.embedder.params.values_mut().copy_from_slice(&p[..n]);
    h.alpha_raw = p[n];
    h
}

/// Flattened embedder parameters followed by the raw mixing weight.
fn head_params(h: &QuasimetricHead<f64>) -> Vec<f64> {
    let mut p = h.embedder.params.values().to_vec();
    p.push(h.alpha_raw);
    p
}

/// Gradient of `sum_i u_i d(z_i, w_i)` with respect to the head and latents.
fn head_grads(h: &QuasimetricHead<f64>, z: &Matrix<f64>, w: &Matrix<f64>, u: &[f64]) -> (Vec<f64>, Matrix<f64>) {
    let b = z.rows();
    let both = Matrix::vstack(&[z, w]);
    let (e, tape) = h.embedder.forward(&both, None).unwrap();
    let pg = h.pair_backward(&e.slice_rows(0, b), &e.slice_rows(b, 2 * b), u);
    let ge = Matrix::vstack(&[&pg.ex, &pg.ey]);
    let g = h.embedder.backward(&tape, &ge).unwrap();
    let mut p = g.params;
    p.push(pg.alpha_raw);
    (p, g.input)
}

fn pair_distances(h: &QuasimetricHead<f64>, z: &Matrix<f64>, w: &Matrix<f64>) -> Vec<f64> {
    h.pair_distances(&h.embed(z).unwrap(), &h.embed(w).unwrap())
}

pub fn quasimetric_head_gradients() {
    let mut rng = rng_stream(4, 0);
    let h = random_head(&mut rng);
    let (z, w) = (random_matrix(8, 16, 2.0, &mut rng), random_matrix(8, 16, 2.0, &mut rng));
    let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (gp, gz) = head_grads(&h, &z, &w, &u);
    let total = |h: &QuasimetricHead<f64>, z: &Matrix<f64>| pair_distances(h, z, &w).iter().zip(&u).map(|(d, u)| d * u).sum::<f64>();
    check("head params and alpha", &head_params(&h), &gp, |p| total(&head_with(&h, p), &z), &mut rng);
    let n = head_params(&h).len();
    assert!(gp[n - 1] != 0.0);
    check("head latents", z.as_slice(), &gz.as_slice()[..8 * 16], |v| total(&h, &Matrix::from_vec(8, 16, v.to_vec())), &mut rng);
}

pub fn distance_loss_gradients() {
    let mut rng = rng_stream(5, 0);
    let h = random_head(&mut rng);
    let z = random_matrix(8, 16, 2.0, &mut rng);
    let (zs, zr) = (random_matrix(8, 16, 2.0, &mut rng), random_matrix(8, 16, 2.0, &mut rng));
    let duals = DistDuals { lambda_dist: 3.0, mu: 5.0, sigma: 0.7, ..DistDuals::default() };
    let loss = |h: &QuasimetricHead<f64>| {
        qrl_step(&pair_distances(h, &z, &zs), &pair_distances(h, &z, &zr), &duals).unwrap().loss
    };
    let step = qrl_step(&pair_distances(&h, &z, &zs), &pair_distances(&h, &z, &zr), &duals).unwrap();
    let (g1, _) = head_grads(&h, &z, &zs, &step.grad_close);
    let (g2, _) = head_grads(&h, &z, &zr, &step.grad_far);
    let g: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
    check("distance loss", &head_params(&h), &g, |p| loss(&head_with(&h, p)), &mut rng);
}

pub fn representation_loss_gradients() {
    let mut rng = rng_stream(6, 0);
    let z = random_matrix(12, 16, 1.0, &mut rng);
    let (_, gv) = vicreg_variance(&z, 1.0).unwrap();
    let (_, gc) = vicreg_covariance(&z).unwrap();
    let of = |v: &[f64]| Matrix::from_vec(12, 16, v.to_vec());
    check("variance", z.as_slice(), gv.as_slice(), |v| vicreg_variance(&of(v), 1.0).unwrap().0, &mut rng);
    check("covariance", z.as_slice(), gc.as_slice(), |v| vicreg_covariance(&of(v)).unwrap().0, &mut rng);
}

pub fn classifier_loss_gradients() {
    let mut rng = rng_stream(7, 0);
    let b = 10;
    let logits: Vec<f64> = (0..3 * b).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let sig = |l: f64| 1.0 / (1.0 + (-l).exp());
    let lambda = 2.5;
    let loss = |l: &[f64]| {
        let p: Vec<f64> = l.iter().map(|&v| sig(v)).collect();
        ood_loss(&p[..b], &p[b..2 * b], &p[2 * b..], lambda).unwrap()
    };
    let p: Vec<f64> = logits.iter().map(|&v| sig(v)).collect();
    let (gp, gn) = ood_logit_grads(&p[..b], &p[b..], lambda);
    let g: Vec<f64> = gp.into_iter().chain(gn).collect();
    check("classifier loss", &logits, &g, loss, &mut rng);
}

/// Keypoint energy through the encoder: repulsion under the learned
/// quasimetric plus the classifier barrier, as a function of positions.
pub fn keypoint_loss_gradients() {
    let mut rng = rng_stream(8, 0);
    let phi = net(phi_spec(vec![24, 24]), &mut rng);
    let h = random_head(&mut rng);
    let psi = net(psi_spec(vec![24, 24]), &mut rng);
    let k = 7;
    let (lambda_rep, eps, lambda_bar) = (2.0, 1e-2, 0.7);
    let anchors: Vec<[f64; 4]> = (0..k).map(|_| [rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), 0.0, 0.0]).collect();
    let obs_of = |xy: &[f64]| Matrix::from_vec(k, 4, (0..k).flat_map(|i| [xy[2 * i], xy[2 * i + 1], 0.0, 0.0]).collect());
    let energy = |xy: &[f64]| {
        let z = phi.infer(&obs_of(xy)).unwrap();
        let e = h.embed(&z).unwrap();
        let d = h.distance_matrix(&e);
        let mut total = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    total += lambda_rep / (d[i * k + j] + eps);
                }
            }
        }
        let p = psi.infer(&z).unwrap();
        total - lambda_bar * p.as_slice().iter().map(|q| q.ln()).sum::<f64>()
    };
    let xy: Vec<f64> = anchors.iter().flat_map(|a| [a[0], a[1]]).collect();
    let (z, phi_tape) = phi.forward(&obs_of(&xy), None).unwrap();
    let (e, head_tape) = h.embedder.forward(&z, None).unwrap();
    let (_, ge, _) = h.matrix_value_backward(&e, |d| -lambda_rep / ((d + eps) * (d + eps)));
    let mut gz = h.embedder.backward(&head_tape, &ge).unwrap().input;
    let (p, psi_tape) = psi.forward(&z, None).unwrap();
    let dlogit = Matrix::from_vec(k, 1, p.as_slice().iter().map(|&q| -lambda_bar * (1.0 - q)).collect());
    gz.add_assign(&psi.backward_logits(&psi_tape, &dlogit).unwrap().input);
    let gobs = phi.backward(&phi_tape, &gz).unwrap().input;
    let g: Vec<f64> = (0..k).flat_map(|i| [gobs.get(i, 0), gobs.get(i, 1)]).collect();
    check("keypoint loss", &xy, &g, energy, &mut rng);
}

pub fn actor_loss_gradients() {
    let mut rng = rng_stream(9, 0);
    let mut pi = PolicyHead::new(net(policy_spec(vec![24, 24], 0.1), &mut rng));
    pi.log_std = vec![-0.3, 0.4];
    let b = 8;
    let inputs = random_matrix(b, 20, 2.0, &mut rng);
    let actions = random_matrix(b, 2, 0.9, &mut rng);
    let weights: Vec<f64> = (0..b).map(|_| pi.weight(rng.gen_range(-1.0..1.0))).collect();
    // same dropout masks on every evaluation
    let loss = |pi: &PolicyHead<f64>| {
        let mut drop = rng_stream(99, 0);
        pi.awr_loss(&inputs, &actions, &weights, Some(&mut drop)).unwrap()
    };
    let out = loss(&pi);
    let np = pi.net.params.len();
    let mut x = pi.net.params.values().to_vec();
    x.extend(&pi.log_std);
    let g: Vec<f64> = out.net.iter().chain(&out.log_std).copied().collect();
    check(
        "actor loss",
        &x,
        &g,
        |p| {
            let mut q = pi.clone();
            q.net.params.values_mut().copy_from_slice(&p[..np]);
            q.log_std = p[np..].to_vec();
            loss(&q).loss
        },
        &mut rng,
    );
}
