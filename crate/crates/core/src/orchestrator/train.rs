//! The training loop: latent-space losses, keypoint coverage and the actor,
//! in that order within each step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{keypoint_config, Model};
use crate::actor::sample_actor_goal;
use crate::keypoints::init_keypoints;
use crate::latent::{qrl_step, vicreg_covariance, vicreg_variance};
use crate::maze::{generate_dataset, Dataset, MazeLayout, Observation};
use crate::nn::{rng_stream, Matrix};
use crate::ood::{dual_update_ood, make_negatives, ood_logit_grads, ood_loss};
use crate::{Error, Result};

const STREAM_BATCH: u64 = 10;
const STREAM_DROPOUT: u64 = 11;
const STREAM_KEYPOINTS: u64 = 12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss_var: f64,
    pub loss_cov: f64,
    pub loss_dist: f64,
    pub mean_close: f64,
    pub mean_far: f64,
    pub mean_d_successor: f64,
    pub mean_d_random: f64,
    pub loss_ood: f64,
    pub mean_psi_positive: f64,
    pub mean_psi_negative: f64,
    pub loss_awr: f64,
    pub mean_advantage: f64,
    pub mean_awr_weight: f64,
    pub lambda_dist: f64,
    pub lambda_ood: f64,
    pub alpha: f64,
    pub kps_repel: f64,
    pub kps_barrier: f64,
    pub kps_mean_psi: f64,
    pub lambda_kps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointSnapshot {
    pub step: u64,
    pub positions: Vec<[f32; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub layout: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps_success: f64,
    pub plan_failures: usize,
}

/// Append-only record of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: String,
    pub logs: Vec<StepLog>,
    pub keypoint_snapshots: Vec<KeypointSnapshot>,
    pub evaluations: Vec<EvalSummary>,
    pub network_checksums: Vec<u64>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// The report minus wall-clock time, for determinism comparisons.
    pub fn without_timing(&self) -> RunReport {
        RunReport { wall_clock_secs: 0.0, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn load_dataset(config: &TrainConfig, layout: &MazeLayout) -> Result<Dataset> {
    let stem = std::path::Path::new(&config.layout).file_stem().and_then(|s| s.to_str());
    if config.layout != layout.name && stem != Some(layout.name.as_str()) {
        return Err(Error::Incompatible(format!("config is for layout {}, not {}", config.layout, layout.name)));
    }
    let ds = match &config.dataset {
        Some(path) => Dataset::load(path)?,
        None => generate_dataset(layout, config.dataset_style, config.dataset_size, config.dataset_seed)?,
    };
    if ds.layout_name != layout.name {
        return Err(Error::Incompatible(format!("dataset is for layout {}, not {}", ds.layout_name, layout.name)));
    }
    Ok(ds)
}

/// Owns a model and steps it over a dataset.
pub struct Trainer {
    pub config: TrainConfig,
    pub dataset: Dataset,
    pub model: Model,
    pub report: RunReport,
    batch_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    started: std::time::Instant,
}

fn add_rows(dst: &mut Matrix<f32>, offset: usize, src: &Matrix<f32>, src_rows: std::ops::Range<usize>) {
    for (k, i) in src_rows.enumerate() {
        for (a, &b) in dst.row_mut(offset + k).iter_mut().zip(src.row(i)) {
            *a += b;
        }
    }
}

fn check(what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        let mut kps_rng = rng_stream(config.seed, STREAM_KEYPOINTS);
        let kps = init_keypoints(&dataset, keypoint_config(&config, config.kps_barrier), &mut kps_rng)?;
        let kps_ablation = if config.kps_ablation {
            let mut ab = kps.clone();
            ab.config = keypoint_config(&config, false);
            Some(ab)
        } else {
            None
        };
        let mut model = Model::init(&config, kps, kps_ablation)?;
        model.kps.refresh(&model.phi.net)?;
        if let Some(ab) = model.kps_ablation.as_mut() {
            ab.refresh(&model.phi.net)?;
        }
        let report = RunReport { config: config.to_text(), ..RunReport::default() };
        Ok(Trainer {
            batch_rng: rng_stream(config.seed, STREAM_BATCH),
            dropout_rng: rng_stream(config.seed, STREAM_DROPOUT),
            config,
            dataset,
            model,
            report,
            started: std::time::Instant::now(),
        })
    }

    /// One full step. Returns the step's losses.
    pub fn step(&mut self) -> Result<StepLog> {
        let b = self.config.batch_size;
        let t = self.model.step;
        let data = self.dataset.transitions();
        let rng = &mut self.batch_rng;

        // six observation streams: s, s', value goal, actor goal, interpolated, extrapolated
        let mut obs: Vec<Observation> = vec![[0.0; 4]; 6 * b];
        let mut actions = Matrix::zeros(b, 2);
        for i in 0..b {
            let idx = rng.gen_range(0..data.len());
            let tr = &data[idx];
            let gv = data[rng.gen_range(0..data.len())].state;
            let ga = sample_actor_goal(&self.dataset, idx, rng);
            let (c, e) = make_negatives(&tr.state, &gv, rng);
            obs[i] = tr.state;
            obs[b + i] = tr.next_state;
            obs[2 * b + i] = gv;
            obs[3 * b + i] = ga;
            obs[4 * b + i] = c;
            obs[5 * b + i] = e;
            actions.row_mut(i).copy_from_slice(&tr.action);
        }
        let m = &mut self.model;
        let x = crate::latent::observations_matrix(&obs);
        let (zall, phi_tape) = m.phi.net.forward(&x, None)?;
        let mut gz = Matrix::zeros(6 * b, zall.cols());

        // (A) representation
        let z = zall.slice_rows(0, b);
        let (loss_var, gvar) = vicreg_variance(&z, self.config.vicreg_target)?;
        let (loss_cov, gcov) = vicreg_covariance(&z)?;
        add_rows(&mut gz, 0, &gvar, 0..b);
        add_rows(&mut gz, 0, &gcov, 0..b);

        // (A) distance; the actor-goal rows are embedded for the advantage only
        let zd = zall.slice_rows(0, 4 * b);
        let (emb, head_tape) = m.head.embedder.forward(&zd, None)?;
        let head = &m.head;
        let d_succ: Vec<f32> = (0..b).map(|i| head.distance_embedded(emb.row(i), emb.row(b + i))).collect();
        let d_rand: Vec<f32> = (0..b).map(|i| head.distance_embedded(emb.row(i), emb.row(2 * b + i))).collect();
        let advantages: Vec<f64> = (0..b)
            .map(|i| {
                let a = head.distance_embedded(emb.row(i), emb.row(3 * b + i));
                let n = head.distance_embedded(emb.row(b + i), emb.row(3 * b + i));
                (a - n) as f64
            })
            .collect();
        let qrl = qrl_step(&d_succ, &d_rand, &m.dist_duals)?;
        let width = emb.cols();
        let mut gemb = Matrix::zeros(4 * b, width);
        let (mut gx, mut gy) = (vec![0.0f32; width], vec![0.0f32; width]);
        let mut galpha = 0.0f32;
        for (partner, grads) in [(b, &qrl.grad_close), (2 * b, &qrl.grad_far)] {
            for i in 0..b {
                gx.fill(0.0);
                gy.fill(0.0);
                galpha += head.single_backward(emb.row(i), emb.row(partner + i), grads[i], &mut gx, &mut gy);
                for (a, &v) in gemb.row_mut(i).iter_mut().zip(&gx) {
                    *a += v;
                }
                for (a, &v) in gemb.row_mut(partner + i).iter_mut().zip(&gy) {
                    *a += v;
                }
            }
        }
        let head_grads = head.embedder.backward(&head_tape, &gemb)?;
        add_rows(&mut gz, 0, &head_grads.input, 0..3 * b);

        // (A) classifier on z, interpolated and extrapolated latents
        let zo = Matrix::vstack(&[&z, &zall.slice_rows(4 * b, 6 * b)]);
        let (p, psi_tape) = m.psi.net.forward(&zo, None)?;
        let probs: Vec<f64> = p.as_slice().iter().map(|&v| v as f64).collect();
        let (pos, negs) = (&probs[..b], &probs[b..]);
        let lambda_ood = m.ood_duals.lambda_ood;
        let loss_ood = ood_loss(pos, &negs[..b], &negs[b..], lambda_ood)?;
        let (gpos, gneg) = ood_logit_grads(pos, negs, lambda_ood);
        let dlogit = Matrix::from_vec(3 * b, 1, gpos.iter().chain(&gneg).map(|&g| g as f32).collect());
        let psi_grads = m.psi.net.backward_logits(&psi_tape, &dlogit)?;
        add_rows(&mut gz, 0, &psi_grads.input, 0..b);
        add_rows(&mut gz, 4 * b, &psi_grads.input, b..3 * b);

        let phi_grads = m.phi.net.backward(&phi_tape, &gz)?;
        let mean_pos = pos.iter().sum::<f64>() / b as f64;
        let mean_neg = negs.iter().sum::<f64>() / (2 * b) as f64;
        check("representation loss", (loss_var + loss_cov) as f64)?;
        check("distance loss", qrl.loss as f64)?;
        check("classifier loss", loss_ood)?;

        m.phi.step(&phi_grads.params)?;
        m.head_adam.step(&mut m.head.embedder.params, &head_grads.params)?;
        m.alpha.step(&[galpha])?;
        m.head.alpha_raw = m.alpha.params.values()[0];
        m.psi.step(&psi_grads.params)?;
        m.dist_duals.lambda_dist = qrl.lambda_next;
        m.ood_duals.lambda_ood = dual_update_ood(mean_pos, &m.ood_duals);

        // (B) keypoints against the updated, now frozen, networks
        let kr = m.kps.step(&m.phi.net, &m.head, &m.psi.net, t)?;
        if let Some(ab) = m.kps_ablation.as_mut() {
            ab.step(&m.phi.net, &m.head, &m.psi.net, t)?;
        }

        // (C) actor on observation plus actor-goal latent
        let mut inputs = Matrix::zeros(b, 4 + zall.cols());
        for i in 0..b {
            let row = inputs.row_mut(i);
            row[..4].copy_from_slice(&obs[i]);
            row[4..].copy_from_slice(zall.row(3 * b + i));
        }
        let weights: Vec<f64> = advantages.iter().map(|&a| m.policy.weight(a)).collect();
        let awr = m.policy.awr_loss(&inputs, &actions, &weights, Some(&mut self.dropout_rng))?;
        check("actor loss", awr.loss as f64)?;
        m.pi_adam.step(&mut m.policy.net.params, &awr.net)?;
        m.log_std.step(&awr.log_std)?;
        m.policy.log_std = m.log_std.params.values().to_vec();

        m.step += 1;
        let mean = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
        Ok(StepLog {
            step: m.step,
            loss_var: loss_var as f64,
            loss_cov: loss_cov as f64,
            loss_dist: qrl.loss as f64,
            mean_close: qrl.mean_close,
            mean_far: qrl.mean_far,
            mean_d_successor: mean(&d_succ),
            mean_d_random: mean(&d_rand),
            loss_ood,
            mean_psi_positive: mean_pos,
            mean_psi_negative: mean_neg,
            loss_awr: awr.loss as f64,
            mean_advantage: advantages.iter().sum::<f64>() / b as f64,
            mean_awr_weight: awr.mean_weight,
            lambda_dist: m.dist_duals.lambda_dist,
            lambda_ood: m.ood_duals.lambda_ood,
            alpha: m.head.alpha() as f64,
            kps_repel: kr.repel,
            kps_barrier: kr.barrier,
            kps_mean_psi: kr.mean_psi,
            lambda_kps: kr.lambda_barrier,
        })
    }

    fn snapshot(&mut self) {
        let positions = self.model.kps.anchors().iter().map(|a| [a[0], a[1]]).collect();
        self.report.keypoint_snapshots.push(KeypointSnapshot { step: self.model.step, positions });
    }

    /// Runs the remaining steps. `on_checkpoint` is called at each
    /// intermediate checkpoint period.
    pub fn run(&mut self, mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        let (every, ckpt) = (self.config.log_every.max(1), self.config.checkpoint_every);
        if self.report.keypoint_snapshots.is_empty() {
            self.snapshot();
        }
        while self.model.step < self.config.steps {
            let log = self.step()?;
            if log.step % every == 0 || log.step == self.config.steps {
                self.report.logs.push(log);
            }
            if ckpt > 0 && self.model.step % ckpt == 0 && self.model.step < self.config.steps {
                self.snapshot();
                self.finish_report();
                on_checkpoint(self)?;
            }
        }
        self.model.kps.refresh(&self.model.phi.net)?;
        if let Some(ab) = self.model.kps_ablation.as_mut() {
            ab.refresh(&self.model.phi.net)?;
        }
        self.snapshot();
        self.finish_report();
        Ok(())
    }

    fn finish_report(&mut self) {
        self.report.network_checksums = self.model.network_checksums().to_vec();
        self.report.wall_clock_secs = self.started.elapsed().as_secs_f64();
    }
}

/// Loads the layout and dataset named by `config` and trains to completion.
pub fn train(config: &TrainConfig) -> Result<(Model, RunReport)> {
    let layout = MazeLayout::load(&config.layout)?;
    let dataset = load_dataset(config, &layout)?;
    let mut trainer = Trainer::new(config.clone(), dataset)?;
    trainer.run(|_| Ok(()))?;
    Ok((trainer.model, trainer.report))
}
