//! All trained state of a run and its checkpoint mapping.


use super::config::TrainConfig;
use crate::actor::{policy_spec, PolicyHead};
use crate::keypoints::{KeypointConfig, KeypointSet};
use crate::latent::{DistDuals, QuasimetricHead, LATENT_DIM};
use crate::nn::checkpoint::{Blob, Checkpoint};
use crate::nn::{AdamState, Matrix, Mlp, MlpSpec, OutputActivation, Trainable, TrainableVec};
use crate::ood::{psi_spec, OodDuals};
use crate::planner::{Agent, KeypointGraph};
use crate::{Error, Result};

pub fn phi_spec(hidden_sizes: Vec<usize>) -> MlpSpec {
    MlpSpec {
        input_dim: 4,
        hidden_sizes,
        output_dim: LATENT_DIM,
        use_residual: true,
        use_layer_norm: false,
        dropout_rate: 0.0,
        output_activation: OutputActivation::Identity,
    }
}

pub fn dhead_spec(hidden_sizes: Vec<usize>, width: usize) -> MlpSpec {
    MlpSpec {
        input_dim: LATENT_DIM,
        hidden_sizes,
        output_dim: width,
        use_residual: false,
        use_layer_norm: false,
        dropout_rate: 0.0,
        output_activation: OutputActivation::Identity,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub phi: Trainable<f32>,
    /// The embedder inside `head` is trained by `head_adam`; `alpha` owns the
    /// raw mixing weight and is copied into `head` after each update.
    pub head: QuasimetricHead<f32>,
    pub head_adam: AdamState<f32>,
    pub alpha: TrainableVec<f32>,
    pub psi: Trainable<f32>,
    /// Likewise `pi_adam` trains `policy.net` and `log_std` mirrors
    /// `policy.log_std`.
    pub policy: PolicyHead<f32>,
    pub pi_adam: AdamState<f32>,
    pub log_std: TrainableVec<f32>,
    pub dist_duals: DistDuals,
    pub ood_duals: OodDuals,
    pub kps: KeypointSet,
    pub kps_ablation: Option<KeypointSet>,
    pub step: u64,
}

pub fn keypoint_config(c: &TrainConfig, barrier: bool) -> KeypointConfig {
    KeypointConfig {
        count: c.keypoints,
        frozen_until: c.kps_frozen_until,
        lambda_repel: c.lambda_repel,
        eps_repel: c.eps_repel,
        repel_range: c.repel_range,
        learning_rate: c.kps_learning_rate,
        barrier: OodDuals {
            lambda_ood: if barrier { c.lambda_kps } else { 0.0 },
            delta: c.delta,
            dual_lr: if barrier { c.dual_lr } else { 0.0 },
            lambda_max: c.lambda_max,
        },
    }
}

impl Model {
    /// Fresh networks. Each network draws from its own RNG stream.
    pub fn init(c: &TrainConfig, kps: KeypointSet, kps_ablation: Option<KeypointSet>) -> Result<Self> {
        let stream = |s: u64| crate::nn::rng_stream(c.seed, s);
        let lr = c.learning_rate;
        let phi = Mlp::init(phi_spec(c.phi_hidden.clone()), &mut stream(1))?;
        let width = c.iqe_components * c.iqe_component_size;
        let embedder = Mlp::init(dhead_spec(c.dhead_hidden.clone(), width), &mut stream(2))?;
        let head_adam = AdamState::new(embedder.params.len(), lr);
        let head = QuasimetricHead::new(embedder, 0.0, c.iqe_component_size)?;
        let psi = Mlp::init(psi_spec(c.psi_hidden.clone()), &mut stream(3))?;
        let pi_net = Mlp::init(policy_spec(c.pi_hidden.clone(), c.pi_dropout), &mut stream(4))?;
        let pi_adam = AdamState::new(pi_net.params.len(), lr);
        let mut policy = PolicyHead::new(pi_net);
        policy.temperature = c.awr_temperature;
        policy.max_weight = c.awr_max_weight;
        Ok(Model {
            phi: Trainable::new(phi, lr),
            head,
            head_adam,
            alpha: TrainableVec::new(vec![0.0], lr),
            psi: Trainable::new(psi, lr),
            log_std: TrainableVec::new(policy.log_std.clone(), lr),
            policy,
            pi_adam,
            dist_duals: DistDuals {
                lambda_dist: c.lambda_dist,
                margin: c.margin,
                mu: c.softplus_offset,
                sigma: c.softplus_scale,
                dist_cap: c.tau,
                dual_lr: c.dual_lr,
                lambda_max: c.lambda_max,
            },
            ood_duals: OodDuals { lambda_ood: c.lambda_ood, delta: c.delta, dual_lr: c.dual_lr, lambda_max: c.lambda_max },
            kps,
            kps_ablation,
            step: 0,
        })
    }

    pub fn agent(&self) -> Agent<'_> {
        Agent { phi: &self.phi.net, head: &self.head, policy: &self.policy }
    }

    /// Keypoint graph for planning, with latents from the current encoder.
    pub fn keypoint_graph(&self, ablation: bool) -> Result<KeypointGraph> {
        let set = if ablation {
            self.kps_ablation.as_ref().ok_or_else(|| Error::Incompatible("no ablation keypoints".into()))?
        } else {
            &self.kps
        };
        let latents = crate::latent::encode_matrix(&self.phi.net, &set.anchors())?;
        KeypointGraph::new(&latents, &self.head, self.dist_duals.dist_cap)
    }

    /// Parameter checksums of the four networks plus the mixing weight.
    pub fn network_checksums(&self) -> [u64; 5] {
        [
            self.phi.net.params.checksum(),
            self.head.embedder.params.checksum(),
            self.alpha.params.checksum(),
            self.psi.net.params.checksum(),
            self.policy.net.params.checksum(),
        ]
    }

    pub fn to_checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put("config", Blob::Text(config.to_text()));
        ck.put("phi", Blob::Network(self.phi.clone()));
        ck.put("dhead", Blob::Network(Trainable { net: self.head.embedder.clone(), adam: self.head_adam.clone() }));
        ck.put("dhead.alpha", Blob::Vector(self.alpha.clone()));
        ck.put("psi", Blob::Network(self.psi.clone()));
        ck.put("pi", Blob::Network(Trainable { net: self.policy.net.clone(), adam: self.pi_adam.clone() }));
        ck.put("pi.log_std", Blob::Vector(self.log_std.clone()));
        let mut scalars = vec![
            ("step".to_string(), self.step as f64),
            ("lambda_dist".to_string(), self.dist_duals.lambda_dist),
            ("lambda_ood".to_string(), self.ood_duals.lambda_ood),
            ("lambda_kps".to_string(), self.kps.config.barrier.lambda_ood),
        ];
        ck.put("kps", Blob::Vector(self.kps.positions.clone()));
        if let Some(ab) = &self.kps_ablation {
            ck.put("kps.ablation", Blob::Vector(ab.positions.clone()));
            scalars.push(("lambda_kps_ablation".to_string(), ab.config.barrier.lambda_ood));
        }
        ck.put("duals", Blob::Scalars(scalars));
        ck
    }

    /// Rebuilds a model and its config from a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, TrainConfig)> {
        let config = TrainConfig::parse(ck.text("config")?)?;
        let phi = ck.network("phi")?.clone();
        let dhead = ck.network("dhead")?.clone();
        let alpha = ck.vector("dhead.alpha")?.clone();
        if alpha.params.len() != 1 {
            return Err(Error::Incompatible("dhead.alpha must hold one value".into()));
        }
        let head = QuasimetricHead::new(dhead.net, alpha.params.values()[0], config.iqe_component_size)?;
        let pi = ck.network("pi")?.clone();
        let log_std = ck.vector("pi.log_std")?.clone();
        let mut policy = PolicyHead::new(pi.net);
        policy.log_std = log_std.params.values().to_vec();
        policy.temperature = config.awr_temperature;
        policy.max_weight = config.awr_max_weight;
        let lambda = |k: &str| ck.scalar("duals", k);
        let restore = |name: &str, barrier: bool, key: &str| -> Result<KeypointSet> {
            let positions = ck.vector(name)?.clone();
            let mut kc = keypoint_config(&config, barrier);
            kc.barrier.lambda_ood = lambda(key)?;
            if positions.params.len() != 2 * kc.count {
                return Err(Error::Incompatible(format!("{name} holds {} values", positions.params.len())));
            }
            Ok(KeypointSet { config: kc, positions, latents: Matrix::zeros(0, 0) })
        };
        let mut kps = restore("kps", config.kps_barrier, "lambda_kps")?;
        let mut kps_ablation = match ck.get("kps.ablation") {
            Some(_) => Some(restore("kps.ablation", false, "lambda_kps_ablation")?),
            None => None,
        };
        kps.refresh(&phi.net)?;
        if let Some(ab) = kps_ablation.as_mut() {
            ab.refresh(&phi.net)?;
        }
        let c = &config;
        let model = Model {
            phi,
            head,
            head_adam: dhead.adam,
            alpha,
            psi: ck.network("psi")?.clone(),
            policy,
            pi_adam: pi.adam,
            log_std,
            dist_duals: DistDuals {
                lambda_dist: lambda("lambda_dist")?,
                margin: c.margin,
                mu: c.softplus_offset,
                sigma: c.softplus_scale,
                dist_cap: c.tau,
                dual_lr: c.dual_lr,
                lambda_max: c.lambda_max,
            },
            ood_duals: OodDuals {
                lambda_ood: lambda("lambda_ood")?,
                delta: c.delta,
                dual_lr: c.dual_lr,
                lambda_max: c.lambda_max,
            },
            kps,
            kps_ablation,
            step: lambda("step")? as u64,
        };
        Ok((model, config))
    }
}
