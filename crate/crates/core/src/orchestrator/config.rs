//! Training configuration in a `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Every key is optional; omitted keys keep their defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::maze::Style;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Shipped layout name or path to a layout file.
    pub layout: String,
    /// Dataset file. When absent a dataset is generated from the
    /// `dataset_*` fields.
    pub dataset: Option<String>,
    pub dataset_style: Style,
    pub dataset_size: usize,
    pub dataset_seed: u64,

    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,

    pub phi_hidden: Vec<usize>,
    pub dhead_hidden: Vec<usize>,
    pub psi_hidden: Vec<usize>,
    pub pi_hidden: Vec<usize>,
    pub iqe_components: usize,
    pub iqe_component_size: usize,
    pub pi_dropout: f64,

    pub lambda_dist: f64,
    pub margin: f64,
    pub softplus_offset: f64,
    pub softplus_scale: f64,
    pub tau: f64,
    pub dual_lr: f64,
    pub lambda_max: f64,
    pub vicreg_target: f64,

    pub lambda_ood: f64,
    pub delta: f64,

    pub keypoints: usize,
    pub kps_frozen_until: u64,
    pub lambda_repel: f64,
    pub eps_repel: f64,
    pub repel_range: f64,
    pub kps_learning_rate: f64,
    pub lambda_kps: f64,
    /// When off, the barrier multiplier stays at zero.
    pub kps_barrier: bool,
    /// Also trains a second keypoint set with the barrier off.
    pub kps_ablation: bool,

    pub awr_temperature: f64,
    pub awr_max_weight: f64,

    pub log_every: u64,
    /// Intermediate checkpoint period in steps; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layout: "medium".into(),
            dataset: None,
            dataset_style: Style::Navigate,
            dataset_size: 100_000,
            dataset_seed: 0,
            seed: 100,
            steps: 200_000,
            batch_size: 1024,
            learning_rate: 3e-4,
            phi_hidden: vec![512; 3],
            dhead_hidden: vec![512; 3],
            psi_hidden: vec![512; 3],
            pi_hidden: vec![512; 3],
            iqe_components: 64,
            iqe_component_size: 8,
            pi_dropout: 0.1,
            lambda_dist: 1.0,
            margin: 0.25,
            softplus_offset: 500.0,
            softplus_scale: 0.1,
            tau: 100.0,
            dual_lr: 1e-3,
            lambda_max: 1e6,
            vicreg_target: 1.0,
            lambda_ood: 1.0,
            delta: 0.1,
            keypoints: 100,
            kps_frozen_until: 100_000,
            lambda_repel: 100.0,
            eps_repel: 1e-2,
            repel_range: 100.0,
            kps_learning_rate: 3e-4,
            lambda_kps: 100.0,
            kps_barrier: true,
            kps_ablation: false,
            awr_temperature: 5.0,
            awr_max_weight: 100.0,
            log_every: 1000,
            checkpoint_every: 0,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config { line, reason: format!("bad value {v:?} for {key}") })
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse(line, key, p.trim())).collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config { line, reason: format!("bad value {v:?} for {key}") }),
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Reduced sizes for a single CPU core: narrower networks, smaller
    /// batches and fewer steps. The dual step is raised so the multipliers
    /// cover a comparable range in the shorter run, and the cut distance is
    /// scaled to the shorter distances these runs learn.
    pub fn desk() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 256,
            phi_hidden: vec![128; 3],
            dhead_hidden: vec![128; 3],
            psi_hidden: vec![128; 3],
            pi_hidden: vec![128; 3],
            kps_frozen_until: 10_000,
            kps_learning_rate: 3e-3,
            dual_lr: 2e-2,
            tau: 12.0,
            ..TrainConfig::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Config { line, reason: "expected key = value".into() })?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config { line, reason: format!("duplicate key {key}") });
            }
            match key {
                "layout" => c.layout = v.to_string(),
                "dataset" => c.dataset = Some(v.to_string()),
                "dataset_style" => c.dataset_style = parse(line, key, v)?,
                "dataset_size" => c.dataset_size = parse(line, key, v)?,
                "dataset_seed" => c.dataset_seed = parse(line, key, v)?,
                "seed" => c.seed = parse(line, key, v)?,
                "steps" => c.steps = parse(line, key, v)?,
                "batch_size" => c.batch_size = parse(line, key, v)?,
                "learning_rate" => c.learning_rate = parse(line, key, v)?,
                "phi_hidden" => c.phi_hidden = parse_list(line, key, v)?,
                "dhead_hidden" => c.dhead_hidden = parse_list(line, key, v)?,
                "psi_hidden" => c.psi_hidden = parse_list(line, key, v)?,
                "pi_hidden" => c.pi_hidden = parse_list(line, key, v)?,
                "iqe_components" => c.iqe_components = parse(line, key, v)?,
                "iqe_component_size" => c.iqe_component_size = parse(line, key, v)?,
                "pi_dropout" => c.pi_dropout = parse(line, key, v)?,
                "lambda_dist" => c.lambda_dist = parse(line, key, v)?,
                "margin" => c.margin = parse(line, key, v)?,
                "softplus_offset" => c.softplus_offset = parse(line, key, v)?,
                "softplus_scale" => c.softplus_scale = parse(line, key, v)?,
                "tau" => c.tau = parse(line, key, v)?,
                "dual_lr" => c.dual_lr = parse(line, key, v)?,
                "lambda_max" => c.lambda_max = parse(line, key, v)?,
                "vicreg_target" => c.vicreg_target = parse(line, key, v)?,
                "lambda_ood" => c.lambda_ood = parse(line, key, v)?,
                "delta" => c.delta = parse(line, key, v)?,
                "keypoints" => c.keypoints = parse(line, key, v)?,
                "kps_frozen_until" => c.kps_frozen_until = parse(line, key, v)?,
                "lambda_repel" => c.lambda_repel = parse(line, key, v)?,
                "eps_repel" => c.eps_repel = parse(line, key, v)?,
                "repel_range" => c.repel_range = parse(line, key, v)?,
                "kps_learning_rate" => c.kps_learning_rate = parse(line, key, v)?,
                "lambda_kps" => c.lambda_kps = parse(line, key, v)?,
                "kps_barrier" => c.kps_barrier = parse_bool(line, key, v)?,
                "kps_ablation" => c.kps_ablation = parse_bool(line, key, v)?,
                "awr_temperature" => c.awr_temperature = parse(line, key, v)?,
                "awr_max_weight" => c.awr_max_weight = parse(line, key, v)?,
                "log_every" => c.log_every = parse(line, key, v)?,
                "checkpoint_every" => c.checkpoint_every = parse(line, key, v)?,
                _ => return Err(Error::Config { line, reason: format!("unknown key {key}") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("layout", self.layout.clone());
        if let Some(d) = &self.dataset {
            kv("dataset", d.clone());
        }
        kv("dataset_style", self.dataset_style.to_string());
        kv("dataset_size", self.dataset_size.to_string());
        kv("dataset_seed", self.dataset_seed.to_string());
        kv("seed", self.seed.to_string());
        kv("steps", self.steps.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("phi_hidden", list(&self.phi_hidden));
        kv("dhead_hidden", list(&self.dhead_hidden));
        kv("psi_hidden", list(&self.psi_hidden));
        kv("pi_hidden", list(&self.pi_hidden));
        kv("iqe_components", self.iqe_components.to_string());
        kv("iqe_component_size", self.iqe_component_size.to_string());
        kv("pi_dropout", self.pi_dropout.to_string());
        kv("lambda_dist", self.lambda_dist.to_string());
        kv("margin", self.margin.to_string());
        kv("softplus_offset", self.softplus_offset.to_string());
        kv("softplus_scale", self.softplus_scale.to_string());
        kv("tau", self.tau.to_string());
        kv("dual_lr", self.dual_lr.to_string());
        kv("lambda_max", self.lambda_max.to_string());
        kv("vicreg_target", self.vicreg_target.to_string());
        kv("lambda_ood", self.lambda_ood.to_string());
        kv("delta", self.delta.to_string());
        kv("keypoints", self.keypoints.to_string());
        kv("kps_frozen_until", self.kps_frozen_until.to_string());
        kv("lambda_repel", self.lambda_repel.to_string());
        kv("eps_repel", self.eps_repel.to_string());
        kv("repel_range", self.repel_range.to_string());
        kv("kps_learning_rate", self.kps_learning_rate.to_string());
        kv("lambda_kps", self.lambda_kps.to_string());
        kv("kps_barrier", self.kps_barrier.to_string());
        kv("kps_ablation", self.kps_ablation.to_string());
        kv("awr_temperature", self.awr_temperature.to_string());
        kv("awr_max_weight", self.awr_max_weight.to_string());
        kv("log_every", self.log_every.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config { line: 0, reason });
        let positive = [
            ("learning_rate", self.learning_rate),
            ("softplus_scale", self.softplus_scale),
            ("tau", self.tau),
            ("eps_repel", self.eps_repel),
            ("repel_range", self.repel_range),
            ("kps_learning_rate", self.kps_learning_rate),
            ("awr_max_weight", self.awr_max_weight),
            ("lambda_max", self.lambda_max),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{k} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("lambda_dist", self.lambda_dist),
            ("margin", self.margin),
            ("softplus_offset", self.softplus_offset),
            ("dual_lr", self.dual_lr),
            ("vicreg_target", self.vicreg_target),
            ("lambda_ood", self.lambda_ood),
            ("lambda_repel", self.lambda_repel),
            ("lambda_kps", self.lambda_kps),
            ("awr_temperature", self.awr_temperature),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{k} must be non-negative and finite, got {v}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(0.0..1.0).contains(&self.pi_dropout) {
            return bad(format!("pi_dropout must lie in [0, 1), got {}", self.pi_dropout));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if self.keypoints == 0 {
            return bad("keypoints must be positive".into());
        }
        if self.iqe_components == 0 || self.iqe_component_size == 0 {
            return bad("iqe sizes must be positive".into());
        }
        for (k, h) in [
            ("phi_hidden", &self.phi_hidden),
            ("dhead_hidden", &self.dhead_hidden),
            ("psi_hidden", &self.psi_hidden),
            ("pi_hidden", &self.pi_hidden),
        ] {
            if h.is_empty() || h.contains(&0) {
                return bad(format!("{k} needs positive widths"));
            }
        }
        if self.dataset.is_none() && self.dataset_size % self.dataset_style.trajectory_length() != 0 {
            return bad(format!(
                "dataset_size {} is not a multiple of the {} trajectory length",
                self.dataset_size, self.dataset_style
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::desk();
        c.dataset = Some("data/x.bin".into());
        c.kps_ablation = true;
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(TrainConfig::parse(&TrainConfig::default().to_text()).unwrap(), TrainConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        for (text, line) in [
            ("steps = 10\nsteps = 20", 2),
            ("# c\nfoo = 1", 2),
            ("batch_size = -3", 1),
            ("just words", 1),
            ("kps_barrier = maybe", 1),
        ] {
            match TrainConfig::parse(text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(TrainConfig::parse("delta = 1.5").is_err());
        assert!(TrainConfig::parse("phi_hidden = 4,0").is_err());
        assert!(TrainConfig::parse("softplus_scale = nan").is_err());
        assert!(TrainConfig::parse("dataset_style = stitch\ndataset_size = 1100").is_err());
    }
}
