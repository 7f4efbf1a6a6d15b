//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Every key can also be given on the command line as `--key-name value`;
//! command-line values win over the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, BackboneVariant, NetConfig, ReasoningConfig};
use srnet_core::training::{DeltaMode, LossConfig, SgdConfig, TrainConfig};

use crate::CliError;

/// Recognised keys, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "backbone",
    "ablation",
    "stage_channels",
    "units_per_stage",
    "stage_dilations",
    "group_count",
    "shuffle_groups",
    "width_divisor",
    "input_size",
    "lr",
    "momentum",
    "weight_decay",
    "epochs",
    "batch_size",
    "delta",
    "augment",
    "seed",
    "samples",
    "holdout",
    "dataset",
    "checkpoint",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub net: NetConfig,
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub delta: DeltaMode,
    pub augment: bool,
    pub seed: u64,
    /// Synthetic training samples when no dataset directory is given.
    pub samples: usize,
    /// Synthetic held-out samples used by `sweep-depth` and `eval`.
    pub holdout: usize,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            net: NetConfig::desk(BackboneKind::ResnetLike, AblationVariant::SrNet),
            sgd: SgdConfig::default(),
            epochs: 20,
            batch_size: 8,
            delta: DeltaMode::AutoPerImage,
            augment: true,
            seed: 0,
            samples: 200,
            holdout: 50,
            dataset: None,
            checkpoint: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Validation(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parse a config file body on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Validation(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    /// Set one key. Changing `backbone` resets the reasoning stack to that
    /// backbone's reference layout, so set it before any reasoning key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.replace('-', "_");
        let r = &mut self.net.reasoning;
        match key.as_str() {
            "backbone" => {
                let kind: BackboneKind = value.parse()?;
                self.net.backbone = BackboneVariant::of_kind(kind);
                self.net.reasoning = ReasoningConfig::for_backbone(kind);
            }
            "ablation" => self.net.ablation = value.to_ascii_lowercase().parse()?,
            "stage_channels" => r.stage_out_channels = parse_list(&key, value)?,
            "units_per_stage" => r.units_per_stage = parse_list(&key, value)?,
            "stage_dilations" => r.stage_dilations = parse_list(&key, value)?,
            "group_count" => r.group_count = parse(&key, value)?,
            "shuffle_groups" => r.shuffle_groups = parse(&key, value)?,
            "width_divisor" => self.net.width_divisor = parse(&key, value)?,
            "input_size" => self.net.input_size = parse(&key, value)?,
            "lr" => self.sgd.lr = parse(&key, value)?,
            "momentum" => self.sgd.momentum = parse(&key, value)?,
            "weight_decay" => self.sgd.weight_decay = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "delta" => {
                self.delta = if value == "auto" {
                    DeltaMode::AutoPerImage
                } else {
                    DeltaMode::Fixed(parse(&key, value)?)
                }
            }
            "augment" => self.augment = parse_bool(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "samples" => self.samples = parse(&key, value)?,
            "holdout" => self.holdout = parse(&key, value)?,
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Rejects anything the network builder, loss or optimizer would.
    pub fn validate(&self) -> Result<(), CliError> {
        self.net.validate()?;
        build_network(&self.net)?;
        self.loss().validate()?;
        let s = &self.sgd;
        if !(s.lr > 0.0) || !(0.0..1.0).contains(&s.momentum) || !(s.weight_decay >= 0.0) {
            return Err(CliError::Validation(format!(
                "need lr > 0, momentum in [0, 1), weight_decay >= 0 (got {}, {}, {})",
                s.lr, s.momentum, s.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(CliError::Validation("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            delta: self.delta,
            ..LossConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss: self.loss(),
            sgd: self.sgd,
            augment: self.augment,
            seed: self.seed,
            checkpoint: None,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }

    pub fn to_text(&self) -> String {
        let r = &self.net.reasoning;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("backbone", self.net.backbone.kind.to_string());
        put("ablation", self.net.ablation.to_string().to_ascii_lowercase());
        put("stage_channels", join(&r.stage_out_channels));
        put("units_per_stage", join(&r.units_per_stage));
        put("stage_dilations", join(&r.stage_dilations));
        put("group_count", r.group_count.to_string());
        put("shuffle_groups", r.shuffle_groups.to_string());
        put("width_divisor", self.net.width_divisor.to_string());
        put("input_size", self.net.input_size.to_string());
        put("lr", self.sgd.lr.to_string());
        put("momentum", self.sgd.momentum.to_string());
        put("weight_decay", self.sgd.weight_decay.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put(
            "delta",
            match self.delta {
                DeltaMode::AutoPerImage => "auto".into(),
                DeltaMode::Fixed(d) => d.to_string(),
            },
        );
        put("augment", self.augment.to_string());
        put("seed", self.seed.to_string());
        put("samples", self.samples.to_string());
        put("holdout", self.holdout.to_string());
        if let Some(d) = &self.dataset {
            put("dataset", d.display().to_string());
        }
        if let Some(c) = &self.checkpoint {
            put("checkpoint", c.display().to_string());
        }
        put("out", self.out.display().to_string());
        out
    }
}
