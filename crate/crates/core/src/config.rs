//! Flat `key = value` run configuration with `#` comments.
//!
//! ```text
//! # desk-scale run
//! batch = 4
//! patch = 32
//! decom_width = 16
//! ```
//!
//! Keys not listed in the file keep their defaults; unknown keys are an
//! error that names all of them.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{LossWeights, WeightGradient, LOW, NORMAL};
use crate::model::{DecomNetConfig, EnhanceNetConfig};
use crate::training::{Phase, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub batch: usize,
    pub patch: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub iterations_decom: usize,
    pub iterations_enhance: usize,
    pub iterations_finetune: usize,
    /// Fine-tuning runs at `learning_rate * finetune_lr_scale`.
    pub finetune_lr_scale: f64,
    pub loss_weights: LossWeights,
    pub decom: DecomNetConfig,
    pub enhance: EnhanceNetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            batch: 16,
            patch: 96,
            learning_rate: 0.001,
            lr_decay: 0.95,
            momentum: 0.0,
            seed: 0,
            checkpoint_every: 500,
            iterations_decom: 2000,
            iterations_enhance: 2000,
            iterations_finetune: 1000,
            finetune_lr_scale: 0.1,
            loss_weights: LossWeights::default(),
            decom: DecomNetConfig::default(),
            enhance: EnhanceNetConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "batch",
    "patch",
    "learning_rate",
    "lr_decay",
    "momentum",
    "seed",
    "checkpoint_every",
    "iterations_decom",
    "iterations_enhance",
    "iterations_finetune",
    "finetune_lr_scale",
    "lambda_ir",
    "lambda_is",
    "lambda_g",
    "lambda_ij_cross",
    "weight_gradient",
    "decom_depth",
    "decom_width",
    "enhance_scales",
    "enhance_width",
];

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid value {value:?} for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        let mut unknown = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                unknown.push(key.to_owned());
                continue;
            }
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {line}: duplicate key {key}")));
            }
            seen.push(key);
            cfg.set(key, value, line)?;
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let lw = &mut self.loss_weights;
        match key {
            "batch" => self.batch = parse_value(key, value, line)?,
            "patch" => self.patch = parse_value(key, value, line)?,
            "learning_rate" => self.learning_rate = parse_value(key, value, line)?,
            "lr_decay" => self.lr_decay = parse_value(key, value, line)?,
            "momentum" => self.momentum = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value, line)?,
            "iterations_decom" => self.iterations_decom = parse_value(key, value, line)?,
            "iterations_enhance" => self.iterations_enhance = parse_value(key, value, line)?,
            "iterations_finetune" => self.iterations_finetune = parse_value(key, value, line)?,
            "finetune_lr_scale" => self.finetune_lr_scale = parse_value(key, value, line)?,
            "lambda_ir" => lw.lambda_ir = parse_value(key, value, line)?,
            "lambda_is" => lw.lambda_is = parse_value(key, value, line)?,
            "lambda_g" => lw.lambda_g = parse_value(key, value, line)?,
            "lambda_ij_cross" => {
                let v = parse_value(key, value, line)?;
                lw.lambda_ij[LOW][NORMAL] = v;
                lw.lambda_ij[NORMAL][LOW] = v;
            }
            "weight_gradient" => {
                lw.weight_gradient = match value {
                    "joint" => WeightGradient::Joint,
                    "detached" => WeightGradient::Detached,
                    _ => {
                        return Err(Error::Config(format!(
                            "line {line}: weight_gradient must be joint or detached, got {value:?}"
                        )))
                    }
                }
            }
            "decom_depth" => self.decom.depth = parse_value(key, value, line)?,
            "decom_width" => self.decom.width = parse_value(key, value, line)?,
            "enhance_scales" => self.enhance.num_scales = parse_value(key, value, line)?,
            "enhance_width" => self.enhance.width = parse_value(key, value, line)?,
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    /// Every key, one per line, in a form [`RunConfig::parse`] reads back
    /// to an equal value.
    pub fn serialize(&self) -> String {
        let lw = &self.loss_weights;
        let weight_gradient = match lw.weight_gradient {
            WeightGradient::Joint => "joint",
            WeightGradient::Detached => "detached",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("batch", &self.batch);
        kv("patch", &self.patch);
        kv("learning_rate", &self.learning_rate);
        kv("lr_decay", &self.lr_decay);
        kv("momentum", &self.momentum);
        kv("seed", &self.seed);
        kv("checkpoint_every", &self.checkpoint_every);
        kv("iterations_decom", &self.iterations_decom);
        kv("iterations_enhance", &self.iterations_enhance);
        kv("iterations_finetune", &self.iterations_finetune);
        kv("finetune_lr_scale", &self.finetune_lr_scale);
        kv("lambda_ir", &lw.lambda_ir);
        kv("lambda_is", &lw.lambda_is);
        kv("lambda_g", &lw.lambda_g);
        kv("lambda_ij_cross", &lw.lambda_ij[LOW][NORMAL]);
        kv("weight_gradient", &weight_gradient);
        kv("decom_depth", &self.decom.depth);
        kv("decom_width", &self.decom.width);
        kv("enhance_scales", &self.enhance.num_scales);
        kv("enhance_width", &self.enhance.width);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss_weights.lambda_ij[LOW][NORMAL] != self.loss_weights.lambda_ij[NORMAL][LOW] {
            return Err(Error::Config("cross reconstruction weights must be equal".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(self.finetune_lr_scale > 0.0 && self.finetune_lr_scale.is_finite()) {
            return Err(Error::Config("finetune_lr_scale must be positive".into()));
        }
        self.decom.validate()?;
        self.enhance.validate()?;
        for phase in Phase::ALL {
            self.train_config(phase).validate()?;
        }
        if self.patch % self.enhance.divisor() != 0 {
            return Err(Error::Config(format!(
                "patch {} must be divisible by {}",
                self.patch,
                self.enhance.divisor()
            )));
        }
        Ok(())
    }

    pub fn iterations(&self, phase: Phase) -> usize {
        match phase {
            Phase::Decom => self.iterations_decom,
            Phase::Enhance => self.iterations_enhance,
            Phase::Finetune => self.iterations_finetune,
        }
    }

    pub fn train_config(&self, phase: Phase) -> TrainConfig {
        let learning_rate = match phase {
            Phase::Finetune => self.learning_rate * self.finetune_lr_scale,
            _ => self.learning_rate,
        };
        TrainConfig {
            phase,
            iterations: self.iterations(phase),
            batch: self.batch,
            patch: self.patch,
            learning_rate,
            lr_decay: self.lr_decay,
            momentum: self.momentum,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            loss_weights: self.loss_weights,
        }
    }
}
