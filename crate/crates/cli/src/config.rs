//! Flat `key = value` run configuration for `tagsum train`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use tagsum::model::Mode;
use tagsum::topic_model::{default_alpha, DEFAULT_ETA, DEFAULT_TRAIN_SWEEPS};
use tagsum::training::TrainConfig;

/// Every key the config file (and `--set`) accepts.
pub const KEYS: &[&str] = &[
    "train",
    "val",
    "topic_model",
    "mode",
    "coverage",
    "k",
    "lda_alpha",
    "lda_eta",
    "lda_iters",
    "vocab_size",
    "min_freq",
    "embed_dim",
    "hidden_dim",
    "attn_dim",
    "switch_hidden",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "clip_norm",
    "batch_size",
    "epochs",
    "coverage_weight",
    "seed",
    "max_src_len",
    "max_tgt_len",
    "disable_topic_channel",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    /// Reuse a fitted topic model (its directory must hold `vocab.txt`)
    /// instead of fitting one on `train`.
    pub topic_model: Option<PathBuf>,
    pub k: usize,
    pub lda_alpha: f64,
    pub lda_eta: f64,
    pub lda_iters: usize,
    pub vocab_size: usize,
    pub min_freq: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub switch_hidden: usize,
    #[serde(flatten)]
    pub train_config: TrainSection,
}

/// `TrainConfig` as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSection {
    pub mode: Mode,
    pub coverage: bool,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub coverage_weight: f64,
    pub seed: u64,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub disable_topic_channel: bool,
}

impl TrainSection {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            use_coverage: self.coverage,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
            batch_size: self.batch_size,
            epochs: self.epochs,
            coverage_weight: self.coverage_weight,
            seed: self.seed,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            disable_topic_channel: self.disable_topic_channel,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}:{}: expected `key = value`", n + 1))?;
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("{origin}:{}: unknown key `{key}`", n + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_pairs(&text, &path.display().to_string())
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|e| format!("bad value `{v}` for `{key}`: {e}")),
    }
}

fn path(map: &BTreeMap<String, String>, key: &str) -> Option<PathBuf> {
    map.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
}

impl RunConfig {
    /// Builds and validates a config from merged key-value pairs.
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self, String> {
        let d = TrainConfig::default();
        let train = path(map, "train").ok_or("`train` is required")?;
        let k: usize = get(map, "k", 10)?;
        if k == 0 {
            return Err("`k` must be at least 1".into());
        }
        let cfg = RunConfig {
            train,
            val: path(map, "val"),
            topic_model: path(map, "topic_model"),
            k,
            lda_alpha: get(map, "lda_alpha", default_alpha(k))?,
            lda_eta: get(map, "lda_eta", DEFAULT_ETA)?,
            lda_iters: get(map, "lda_iters", DEFAULT_TRAIN_SWEEPS)?,
            vocab_size: get(map, "vocab_size", 50_000)?,
            min_freq: get(map, "min_freq", 1)?,
            embed_dim: get(map, "embed_dim", 64)?,
            hidden_dim: get(map, "hidden_dim", 64)?,
            attn_dim: get(map, "attn_dim", 64)?,
            switch_hidden: get(map, "switch_hidden", 64)?,
            train_config: TrainSection {
                mode: get(map, "mode", d.mode)?,
                coverage: get(map, "coverage", d.use_coverage)?,
                learning_rate: get(map, "learning_rate", d.learning_rate)?,
                beta1: get(map, "beta1", d.beta1)?,
                beta2: get(map, "beta2", d.beta2)?,
                epsilon: get(map, "epsilon", d.epsilon)?,
                clip_norm: get(map, "clip_norm", d.clip_norm)?,
                batch_size: get(map, "batch_size", d.batch_size)?,
                epochs: get(map, "epochs", d.epochs)?,
                coverage_weight: get(map, "coverage_weight", d.coverage_weight)?,
                seed: get(map, "seed", 1)?,
                max_src_len: get(map, "max_src_len", d.max_src_len)?,
                max_tgt_len: get(map, "max_tgt_len", d.max_tgt_len)?,
                disable_topic_channel: get(map, "disable_topic_channel", d.disable_topic_channel)?,
            },
        };
        cfg.train_config
            .to_train_config()
            .validate()
            .map_err(|e| e.to_string())?;
        if !(cfg.lda_alpha > 0.0 && cfg.lda_eta > 0.0) {
            return Err("LDA alpha and eta must be positive".into());
        }
        if cfg.val.as_ref() == Some(&cfg.train) {
            return Err("`val` must differ from `train`".into());
        }
        Ok(cfg)
    }
}
