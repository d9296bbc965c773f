use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::CodecKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrDecay {
    Cosine,
    Constant,
}

impl FromStr for LrDecay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" => Ok(LrDecay::Cosine),
            "constant" => Ok(LrDecay::Constant),
            other => Err(Error::Config(format!("unknown lr decay {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub workers: usize,
    pub steps: usize,
    pub batch_per_worker: usize,
    pub base_lr: f32,
    pub lr_decay: LrDecay,
    pub momentum: f32,
    pub push_codec: CodecKind,
    pub pull_codec: CodecKind,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub blob_stddev: f32,
    /// Evaluate test accuracy every this many steps (and after the last).
    pub eval_interval: usize,
    /// Tensors with fewer elements are sent uncompressed.
    pub small_tensor_threshold: usize,
    /// Compute worker gradients on the rayon pool.
    pub parallel: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            steps: 2000,
            batch_per_worker: 32,
            base_lr: 0.05,
            lr_decay: LrDecay::Cosine,
            momentum: 0.9,
            push_codec: CodecKind::three_lc(1.0),
            pull_codec: CodecKind::three_lc(1.0),
            seed: 1,
            input_dim: 20,
            hidden_dim: 64,
            classes: 10,
            n_train: 10_000,
            n_test: 2_000,
            blob_stddev: 0.5,
            eval_interval: 100,
            small_tensor_threshold: 256,
            parallel: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl SimConfig {
    /// Same codec in both directions.
    pub fn with_codec(mut self, codec: CodecKind) -> Self {
        self.push_codec = codec;
        self.pull_codec = codec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("workers", self.workers),
            ("steps", self.steps),
            ("batch_per_worker", self.batch_per_worker),
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("classes", self.classes),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("eval_interval", self.eval_interval),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return Err(Error::Config(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if !self.blob_stddev.is_finite() || self.blob_stddev < 0.0 {
            return Err(Error::Config(format!("blob_stddev must be >= 0, got {}", self.blob_stddev)));
        }
        if self.workers * self.batch_per_worker > self.n_train {
            return Err(Error::Config(format!(
                "global batch {} exceeds n_train {}",
                self.workers * self.batch_per_worker,
                self.n_train
            )));
        }
        self.push_codec.validate()?;
        self.pull_codec.validate()?;
        Ok(())
    }

    /// Learning rate for zero-based `step`.
    pub fn lr_at(&self, step: usize) -> f32 {
        match self.lr_decay {
            LrDecay::Constant => self.base_lr,
            LrDecay::Cosine => {
                let progress = step as f64 / self.steps as f64;
                (f64::from(self.base_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())) as f32
            }
        }
    }

    /// Applies one `key = value` setting. `codec` sets both directions.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "workers" => self.workers = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "batch_per_worker" => self.batch_per_worker = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = value.parse()?,
            "momentum" => self.momentum = parse(key, value)?,
            "push_codec" => self.push_codec = value.parse()?,
            "pull_codec" => self.pull_codec = value.parse()?,
            "codec" => {
                let c: CodecKind = value.parse()?;
                self.push_codec = c;
                self.pull_codec = c;
            }
            "seed" => self.seed = parse(key, value)?,
            "input_dim" => self.input_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "n_train" => self.n_train = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "blob_stddev" => self.blob_stddev = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "small_tensor_threshold" => self.small_tensor_threshold = parse(key, value)?,
            "parallel" => self.parallel = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` lines on top of the defaults. `#` starts a
    /// comment; blank lines are ignored.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv_str(&fs::read_to_string(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let decay = match self.lr_decay {
            LrDecay::Cosine => "cosine",
            LrDecay::Constant => "constant",
        };
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch_per_worker = {}", self.batch_per_worker);
        let _ = writeln!(s, "base_lr = {}", self.base_lr);
        let _ = writeln!(s, "lr_decay = {decay}");
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "push_codec = {}", self.push_codec);
        let _ = writeln!(s, "pull_codec = {}", self.pull_codec);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "input_dim = {}", self.input_dim);
        let _ = writeln!(s, "hidden_dim = {}", self.hidden_dim);
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "blob_stddev = {}", self.blob_stddev);
        let _ = writeln!(s, "eval_interval = {}", self.eval_interval);
        let _ = writeln!(s, "small_tensor_threshold = {}", self.small_tensor_threshold);
        let _ = writeln!(s, "parallel = {}", self.parallel);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = SimConfig::default().with_codec(CodecKind::TopK { fraction: 0.25 });
        cfg.lr_decay = LrDecay::Constant;
        cfg.seed = 99;
        assert_eq!(SimConfig::from_kv_str(&cfg.to_kv_string()).unwrap(), cfg);
    }

    #[test]
    fn kv_comments_and_errors() {
        let cfg = SimConfig::from_kv_str("# header\nworkers = 2 # two\n\ncodec = 3lc:1.5\n").unwrap();
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.pull_codec, CodecKind::three_lc(1.5));
        assert!(SimConfig::from_kv_str("workers 2").is_err());
        assert!(SimConfig::from_kv_str("wrokers = 2").is_err());
        assert!(SimConfig::from_kv_str("momentum = 1.0").is_err());
        assert!(SimConfig::from_kv_str("workers = 0").is_err());
    }

    #[test]
    fn cosine_schedule() {
        let cfg = SimConfig { steps: 100, base_lr: 0.2, ..SimConfig::default() };
        assert_eq!(cfg.lr_at(0), 0.2);
        assert!((cfg.lr_at(50) - 0.1).abs() < 1e-7);
        assert!(cfg.lr_at(99) < 0.001);
    }
}
