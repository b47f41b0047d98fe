//! Flat `key = value` configuration files.
//!
//! `#` starts a comment. Widths are comma-separated lists. Every key is
//! optional; unknown or repeated keys are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use mpgvae_core::config::TrainConfig;
use mpgvae_core::ModelConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Use only the first molecules of the dataset.
    pub max_molecules: Option<usize>,
    /// Record elapsed seconds in the training log. Off by default so that
    /// identical runs produce identical logs.
    pub log_wall_time: bool,
}

pub const MODEL_KEYS: [&str; 6] = [
    "encoder_widths",
    "decoder_widths",
    "graph_width",
    "latent_dim",
    "set2set_steps",
    "conditional",
];

pub const KEYS: [&str; 17] = [
    "encoder_widths",
    "decoder_widths",
    "graph_width",
    "latent_dim",
    "set2set_steps",
    "conditional",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "epochs",
    "kl_warmup_epochs",
    "seed",
    "chunk_size",
    "max_molecules",
    "log_wall_time",
];

/// Closest known key, preferring keys that share an underscore-separated
/// word with `key`.
pub fn suggest(key: &str) -> Option<&'static str> {
    let words: BTreeSet<&str> = key.split('_').filter(|w| !w.is_empty()).collect();
    let score = |k: &str| {
        let shared = k.split('_').any(|w| words.contains(w));
        (shared, strsim::normalized_damerau_levenshtein(key, k))
    };
    let (best, (shared, sim)) = KEYS
        .iter()
        .map(|&k| (k, score(k)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
    (shared || sim >= 0.6).then_some(best)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse {raw:?}")))
}

fn list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|s| value(key, s.trim())).collect()
}

fn boolean(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("`{key}`: expected true or false, got {raw:?}"))),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !KEYS.contains(&key) {
            let hint = suggest(key).map(|k| format!(" (did you mean `{k}`?)")).unwrap_or_default();
            return Err(CliError::Config(format!("unknown key `{key}`{hint}")));
        }
        if !seen.insert(key.to_string()) {
            return Err(CliError::Config(format!("key `{key}` given twice")));
        }
        match key {
            "encoder_widths" => c.model.encoder_widths = list(key, raw)?,
            "decoder_widths" => c.model.decoder_widths = list(key, raw)?,
            "graph_width" => c.model.graph_width = value(key, raw)?,
            "latent_dim" => c.model.latent_dim = value(key, raw)?,
            "set2set_steps" => c.model.set2set_steps = value(key, raw)?,
            "conditional" => c.model.conditional = boolean(key, raw)?,
            "batch_size" => c.train.batch_size = value(key, raw)?,
            "learning_rate" => c.train.learning_rate = value(key, raw)?,
            "adam_beta1" => c.train.adam_beta1 = value(key, raw)?,
            "adam_beta2" => c.train.adam_beta2 = value(key, raw)?,
            "adam_eps" => c.train.adam_eps = value(key, raw)?,
            "epochs" => c.train.epochs = value(key, raw)?,
            "kl_warmup_epochs" => c.train.kl_warmup_epochs = value(key, raw)?,
            "seed" => c.train.seed = value(key, raw)?,
            "chunk_size" => c.train.chunk_size = value(key, raw)?,
            "max_molecules" => c.max_molecules = Some(value(key, raw)?),
            "log_wall_time" => c.log_wall_time = boolean(key, raw)?,
            _ => unreachable!(),
        }
    }
    c.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
    c.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// The model section as config text; parses back to the same value.
pub fn model_config_text(m: &ModelConfig) -> String {
    let mut s = String::new();
    writeln!(s, "encoder_widths = {}", join(&m.encoder_widths)).unwrap();
    writeln!(s, "decoder_widths = {}", join(&m.decoder_widths)).unwrap();
    writeln!(s, "graph_width = {}", m.graph_width).unwrap();
    writeln!(s, "latent_dim = {}", m.latent_dim).unwrap();
    writeln!(s, "set2set_steps = {}", m.set2set_steps).unwrap();
    writeln!(s, "conditional = {}", m.conditional).unwrap();
    s
}

/// Parses text that may contain only model keys.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    for line in text.lines() {
        let key = line.split('=').next().unwrap().trim();
        if !key.is_empty() && !MODEL_KEYS.contains(&key) {
            return Err(CliError::Config(format!("`{key}` is not a model key")));
        }
    }
    Ok(parse_config(text)?.model)
}
