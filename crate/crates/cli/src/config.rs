//! Line-based `key = value` run configuration with `#` comments. The
//! `M2R_SEED` environment variable overrides the configured seed.

use std::path::Path;

use sod_core::loss::LossConfig;
use sod_core::network::ModelConfig;

use crate::error::{CliError, IoContext, Result};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
    /// Synthetic split sizes used by gen-data and the paired smoke runs.
    pub train_samples: usize,
    pub test_samples: usize,
    pub augment: bool,
}

impl Default for TrainConfig {
    /// The toy defaults: 64x64 inputs, 200/50 synthetic split, 10 epochs.
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::toy(),
            train_samples: 200,
            test_samples: 50,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CliError::contract("batch_size must be at least 1"));
        }
        if self.learning_rate <= 0.0 || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(CliError::contract(
                "learning_rate must be positive; momentum/weight_decay nonnegative",
            ));
        }
        if self.epochs == 0 {
            return Err(CliError::contract("epochs must be at least 1"));
        }
        self.model.validate()?;
        Ok(())
    }

    pub fn apply_env(&mut self) {
        if let Ok(s) = std::env::var("M2R_SEED") {
            if let Ok(v) = s.trim().parse::<u64>() {
                self.seed = v;
            }
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(CliError::contract(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::contract(format!("{key}: cannot parse '{v}'")))
}

/// Apply one `key = value` assignment.
fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "batch_size" => cfg.batch_size = parse_num(key, value)?,
        "momentum" => cfg.momentum = parse_num(key, value)?,
        "weight_decay" => cfg.weight_decay = parse_num(key, value)?,
        "epochs" => cfg.epochs = parse_num(key, value)?,
        "learning_rate" => cfg.learning_rate = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        "train_samples" => cfg.train_samples = parse_num(key, value)?,
        "test_samples" => cfg.test_samples = parse_num(key, value)?,
        "augment" => cfg.augment = parse_bool(key, value)?,
        "input" => cfg.model.input = parse_num(key, value)?,
        "channels" => {
            let mut out = Vec::new();
            for part in value.split(',') {
                out.push(parse_num(key, part.trim())?);
            }
            cfg.model.channels = out;
        }
        "ndam_p1" => cfg.model.ndam_p1 = parse_bool(key, value)?,
        "ndam_p2" => cfg.model.ndam_p2 = parse_bool(key, value)?,
        "aiam_i1" => cfg.model.aiam_i1 = parse_bool(key, value)?,
        "aiam_i2" => cfg.model.aiam_i2 = parse_bool(key, value)?,
        "side_outputs" => cfg.model.side_outputs = parse_bool(key, value)?,
        "mu" => cfg.loss.mu = parse_num(key, value)?,
        "lambda1" => cfg.loss.lambda[0] = parse_num(key, value)?,
        "lambda2" => cfg.loss.lambda[1] = parse_num(key, value)?,
        "lambda3" => cfg.loss.lambda[2] = parse_num(key, value)?,
        "lambda4" => cfg.loss.lambda[3] = parse_num(key, value)?,
        "loss_eps" => cfg.loss.eps = parse_num(key, value)?,
        "bce_sum" => cfg.loss.bce_sum = parse_bool(key, value)?,
        "l4_complement" => cfg.loss.l4_complement = parse_bool(key, value)?,
        _ => return Err(CliError::contract(format!("unknown config key '{key}'"))),
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::contract(format!(
                "config line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        apply(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).io_ctx(format!("reading config {}", p.display()))?;
            parse_config(&text)
        }
        None => {
            let mut cfg = TrainConfig::default();
            cfg.apply_env();
            Ok(cfg)
        }
    }
}
