use crate::features::TOTAL_WIDTH;
use crate::nn::AdamConfig;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoderConfig {
    pub embed_size: usize,
    pub heads: usize,
    pub layers: usize,
    /// Feed-forward width inside the feature encoder layers.
    pub fc_width: usize,
}

impl Default for FeatureEncoderConfig {
    fn default() -> Self {
        FeatureEncoderConfig {
            embed_size: 16,
            heads: 2,
            layers: 1,
            fc_width: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_size: usize,
    pub feature_encoder: FeatureEncoderConfig,
    pub directed: bool,
    pub temperature: f64,
    pub init_std: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            max_seq_len: 512,
            hidden_size: 128,
            layers: 2,
            heads: 4,
            ff_size: 512,
            feature_encoder: FeatureEncoderConfig::default(),
            directed: false,
            temperature: 0.8,
            init_std: 0.02,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        let f = &self.feature_encoder;
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("hidden_size", self.hidden_size),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_size", self.ff_size),
            ("feature.embed_size", f.embed_size),
            ("feature.heads", f.heads),
            ("feature.layers", f.layers),
            ("feature.fc_width", f.fc_width),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.hidden_size % self.heads != 0 {
            return Err("hidden_size must be divisible by heads".into());
        }
        if f.embed_size % f.heads != 0 {
            return Err("feature.embed_size must be divisible by feature.heads".into());
        }
        if !(self.temperature > 0.0) {
            return Err("temperature must be positive".into());
        }
        debug_assert_eq!(TOTAL_WIDTH, 39);
        Ok(())
    }

    /// `key=value` lines, the same keys `set` accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let f = &self.feature_encoder;
        let a = &self.adam;
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("max_seq_len", self.max_seq_len.to_string()),
            ("hidden_size", self.hidden_size.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("ff_size", self.ff_size.to_string()),
            ("feature.embed_size", f.embed_size.to_string()),
            ("feature.heads", f.heads.to_string()),
            ("feature.layers", f.layers.to_string()),
            ("feature.fc_width", f.fc_width.to_string()),
            ("directed", self.directed.to_string()),
            ("temperature", self.temperature.to_string()),
            ("init_std", self.init_std.to_string()),
            ("seed", self.seed.to_string()),
            ("lr", a.peak_lr.to_string()),
            ("beta1", a.beta1.to_string()),
            ("beta2", a.beta2.to_string()),
            ("adam_eps", a.eps.to_string()),
            ("warmup_steps", a.warmup_steps.to_string()),
            ("total_steps", a.total_steps.to_string()),
            ("clip_norm", a.clip_norm.to_string()),
        ]
    }

    /// Sets one key; returns `Ok(false)` when the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        fn p<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, String> {
            value
                .trim()
                .parse()
                .map_err(|_| format!("bad value for {key}: {value:?}"))
        }
        let f = &mut self.feature_encoder;
        let a = &mut self.adam;
        match key {
            "vocab_size" => self.vocab_size = p(key, value)?,
            "max_seq_len" => self.max_seq_len = p(key, value)?,
            "hidden_size" => self.hidden_size = p(key, value)?,
            "layers" => self.layers = p(key, value)?,
            "heads" => self.heads = p(key, value)?,
            "ff_size" => self.ff_size = p(key, value)?,
            "feature.embed_size" => f.embed_size = p(key, value)?,
            "feature.heads" => f.heads = p(key, value)?,
            "feature.layers" => f.layers = p(key, value)?,
            "feature.fc_width" => f.fc_width = p(key, value)?,
            "directed" => self.directed = p(key, value)?,
            "temperature" => self.temperature = p(key, value)?,
            "init_std" => self.init_std = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "lr" => a.peak_lr = p(key, value)?,
            "beta1" => a.beta1 = p(key, value)?,
            "beta2" => a.beta2 = p(key, value)?,
            "adam_eps" => a.eps = p(key, value)?,
            "warmup_steps" => a.warmup_steps = p(key, value)?,
            "total_steps" => a.total_steps = p(key, value)?,
            "clip_norm" => a.clip_norm = p(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {line:?}"))?;
            if !cfg.set(k.trim(), v)? {
                return Err(format!("unknown model key {k:?}"));
            }
        }
        Ok(cfg)
    }
}
