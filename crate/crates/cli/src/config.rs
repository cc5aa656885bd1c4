//! Flat `key=value` run configuration.

use benchsynth::active::{AlConfig, CommitteeConfig};
use benchsynth::downstream::{RuntimeModel, DEFAULT_TREE_DEPTH};
use benchsynth::model::ModelConfig;
use benchsynth::search::BeamConfig;
use benchsynth::tokenizer::DEFAULT_WORD_FREQ_THRESHOLD;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seeds every stochastic stage; overrides the model's own seed.
    pub seed: u64,
    pub tokenizer_threshold: usize,
    pub model: ModelConfig,
    pub train_steps: u64,
    pub train_batch_size: usize,
    pub max_hole_fraction: f64,
    pub beam: BeamConfig,
    pub al: AlConfig,
    pub al_box_scale: f64,
    pub al_seed_points: usize,
    pub committee: CommitteeConfig,
    pub runtime: RuntimeModel,
    pub tree_max_depth: usize,
    pub turing_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            tokenizer_threshold: DEFAULT_WORD_FREQ_THRESHOLD,
            model: ModelConfig::default(),
            train_steps: 2000,
            train_batch_size: 16,
            max_hole_fraction: benchsynth::corpus::DEFAULT_MAX_HOLE_FRACTION,
            beam: BeamConfig::default(),
            al: AlConfig::default(),
            al_box_scale: 1.5,
            al_seed_points: 10,
            committee: CommitteeConfig::default(),
            runtime: RuntimeModel::default(),
            tree_max_depth: DEFAULT_TREE_DEPTH,
            turing_samples: 30,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "tokenizer.threshold" => self.tokenizer_threshold = parse(key, value)?,
            "train.steps" => self.train_steps = parse(key, value)?,
            "train.batch_size" => self.train_batch_size = parse(key, value)?,
            "train.max_hole_fraction" => self.max_hole_fraction = parse(key, value)?,
            "beam.workload_size" => self.beam.workload_size = parse(key, value)?,
            "beam.beam_width" => self.beam.beam_width = parse(key, value)?,
            "beam.replace_prob" => self.beam.replace_prob = parse(key, value)?,
            "beam.max_depth" => self.beam.max_depth = parse(key, value)?,
            "beam.temperature" => self.beam.temperature = parse(key, value)?,
            "beam.seed_text" => self.beam.seed_text = value.trim().to_string(),
            "al.epochs" => self.al.epochs = parse(key, value)?,
            "al.n_random_points" => self.al.n_random_points = parse(key, value)?,
            "al.passive" => self.al.passive = parse(key, value)?,
            "al.saturation_threshold" => self.al.saturation_threshold = parse(key, value)?,
            "al.saturation_patience" => self.al.saturation_patience = parse(key, value)?,
            "al.box_scale" => self.al_box_scale = parse(key, value)?,
            "al.seed_points" => self.al_seed_points = parse(key, value)?,
            "committee.fit_steps" => self.committee.fit_steps = parse(key, value)?,
            "committee.update_steps" => self.committee.update_steps = parse(key, value)?,
            "committee.learning_rate" => self.committee.learning_rate = parse(key, value)?,
            "committee.kmeans_iters" => self.committee.kmeans_iters = parse(key, value)?,
            "runtime.cpu_per_op" => self.runtime.cpu_per_op = parse(key, value)?,
            "runtime.cpu_launch" => self.runtime.cpu_launch = parse(key, value)?,
            "runtime.gpu_per_op" => self.runtime.gpu_per_op = parse(key, value)?,
            "runtime.gpu_parallelism" => self.runtime.gpu_parallelism = parse(key, value)?,
            "runtime.gpu_transfer" => self.runtime.gpu_transfer = parse(key, value)?,
            "runtime.workload_scale" => self.runtime.workload_scale = parse(key, value)?,
            "tree.max_depth" => self.tree_max_depth = parse(key, value)?,
            "turing.samples" => self.turing_samples = parse(key, value)?,
            _ => match key.strip_prefix("model.") {
                Some("seed") | None => return Err(ConfigError::UnknownKey(key.into())),
                Some(sub) => {
                    let known = self.model.set(sub, value).map_err(|_| ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                    })?;
                    if !known {
                        return Err(ConfigError::UnknownKey(key.into()));
                    }
                }
            },
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: kv.into(),
        })?;
        self.set(k, v)
    }

    pub fn load(path: &Path) -> std::io::Result<Result<Self, ConfigError>> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        Ok(cfg.apply_text(&text).map(|_| cfg))
    }

    /// Propagates the global seed and checks cross-field constraints.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        self.model.seed = self.seed;
        self.beam.seed = self.seed;
        self.al.seed = self.seed;
        self.committee.seed = self.seed;
        self.beam.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.max_hole_fraction > 0.0 && self.max_hole_fraction <= 1.0) {
            return Err(ConfigError::Invalid("train.max_hole_fraction must lie in (0, 1]".into()));
        }
        if self.train_batch_size == 0 {
            return Err(ConfigError::Invalid("train.batch_size must be at least 1".into()));
        }
        if self.al.epochs == 0 {
            return Err(ConfigError::Invalid("al.epochs must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let b = &self.beam;
        let r = &self.runtime;
        let mut pairs: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("tokenizer.threshold".into(), self.tokenizer_threshold.to_string()),
        ];
        pairs.extend(
            self.model
                .pairs()
                .into_iter()
                .filter(|(k, _)| *k != "seed")
                .map(|(k, v)| (format!("model.{k}"), v)),
        );
        let more: [(&str, String); 28] = [
            ("train.steps", self.train_steps.to_string()),
            ("train.batch_size", self.train_batch_size.to_string()),
            ("train.max_hole_fraction", self.max_hole_fraction.to_string()),
            ("beam.workload_size", b.workload_size.to_string()),
            ("beam.beam_width", b.beam_width.to_string()),
            ("beam.replace_prob", b.replace_prob.to_string()),
            ("beam.max_depth", b.max_depth.to_string()),
            ("beam.temperature", b.temperature.to_string()),
            ("beam.seed_text", b.seed_text.clone()),
            ("al.epochs", self.al.epochs.to_string()),
            ("al.n_random_points", self.al.n_random_points.to_string()),
            ("al.passive", self.al.passive.to_string()),
            ("al.saturation_threshold", self.al.saturation_threshold.to_string()),
            ("al.saturation_patience", self.al.saturation_patience.to_string()),
            ("al.box_scale", self.al_box_scale.to_string()),
            ("al.seed_points", self.al_seed_points.to_string()),
            ("committee.fit_steps", self.committee.fit_steps.to_string()),
            ("committee.update_steps", self.committee.update_steps.to_string()),
            ("committee.learning_rate", self.committee.learning_rate.to_string()),
            ("committee.kmeans_iters", self.committee.kmeans_iters.to_string()),
            ("runtime.cpu_per_op", r.cpu_per_op.to_string()),
            ("runtime.cpu_launch", r.cpu_launch.to_string()),
            ("runtime.gpu_per_op", r.gpu_per_op.to_string()),
            ("runtime.gpu_parallelism", r.gpu_parallelism.to_string()),
            ("runtime.gpu_transfer", r.gpu_transfer.to_string()),
            ("runtime.workload_scale", r.workload_scale.to_string()),
            ("tree.max_depth", self.tree_max_depth.to_string()),
            ("turing.samples", self.turing_samples.to_string()),
        ];
        pairs.extend(more.into_iter().map(|(k, v)| (k.to_string(), v)));
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the resolved text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 7\nmodel.hidden_size=32 # small\n\nbeam.workload_size=64\nbeam.seed_text=kernel void [HOLE]\n")
            .unwrap();
        let c = c.resolve().unwrap();
        let mut again = RunConfig::default();
        again.apply_text(&c.to_text()).unwrap();
        assert_eq!(again.resolve().unwrap(), c);
        assert_eq!(c.beam.seed_text, "kernel void [HOLE]");
        assert_eq!(c.model.seed, 7);
    }

    #[test]
    fn unknown_and_bad_keys() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("beam.width", "3"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("model.nope", "3"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("model.seed", "3"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("seed", "x"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.apply_text("justakey"), Err(ConfigError::Syntax { .. })));
        c.set("beam.beam_width", "0").unwrap();
        assert!(c.resolve().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
