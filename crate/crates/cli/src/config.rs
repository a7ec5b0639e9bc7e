//! Flat key=value run configuration covering the model, the optimizer and
//! the degradation pipeline. Lines are `key = value`; `#` starts a comment;
//! unknown keys are rejected so typos cannot silently fall back to defaults.
//!
//! Keys and defaults:
//!   frames = 5                      input window length (odd)
//!   base_channels = 64              trunk width
//!   inner_growth = 16               channels added per dense unit
//!   outer_growth = 64               channels added per outer block
//!   inner_units = 4                 dense units per inner block
//!   outer_blocks_3d = 3             fusion blocks
//!   outer_blocks_2d = 3             reconstruction blocks
//!   scale = 4                       magnification (and decimation) factor
//!   attention_in_extraction = true
//!   attention_in_fusion = true
//!   beta1 = 0.9                     Adam
//!   beta2 = 0.999                   Adam
//!   epsilon = 1e-8                  Adam
//!   lr_initial = 1e-4
//!   lr_drop = 1e-5
//!   drop_after = 40                 epochs at lr_initial
//!   post_drop_epochs = 15           epochs at lr_drop
//!   batch_size = 8
//!   lambda_up = 0.01                weight of the bicubic loss term
//!   use_composite_loss = true
//!   seed = 0
//!   sigma = 1.6                     degradation blur
//!   crop = 256                      HR training crop (multiple of scale)

use std::path::Path;

use ddcn_core::model::ModelConfig;
use ddcn_core::train::TrainConfig;
use ddcn_core::video::DegradationConfig;
use ddcn_core::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub degrade: DegradationConfig,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse value '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!("key '{key}': expected a boolean, got '{other}'"))),
    }
}

impl RunConfig {
    pub fn set_frames(&mut self, frames: usize) -> Result<()> {
        if frames < 3 || frames % 2 == 0 {
            return Err(Error::Config(format!("frames must be odd and at least 3, got {frames}")));
        }
        self.model.t = (frames - 1) / 2;
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "frames" => self.set_frames(parse(key, value)?)?,
            "base_channels" => self.model.base_channels = parse(key, value)?,
            "inner_growth" => self.model.inner_growth = parse(key, value)?,
            "outer_growth" => self.model.outer_growth = parse(key, value)?,
            "inner_units" => self.model.inner_units = parse(key, value)?,
            "outer_blocks_3d" => self.model.outer_blocks_3d = parse(key, value)?,
            "outer_blocks_2d" => self.model.outer_blocks_2d = parse(key, value)?,
            "scale" => {
                self.model.scale = parse(key, value)?;
                self.degrade.scale = self.model.scale;
            }
            "attention_in_extraction" => {
                self.model.attention_in_extraction = parse_bool(key, value)?;
            }
            "attention_in_fusion" => self.model.attention_in_fusion = parse_bool(key, value)?,
            "beta1" => self.train.beta1 = parse(key, value)?,
            "beta2" => self.train.beta2 = parse(key, value)?,
            "epsilon" => self.train.epsilon = parse(key, value)?,
            "lr_initial" => self.train.lr_initial = parse(key, value)?,
            "lr_drop" => self.train.lr_drop = parse(key, value)?,
            "drop_after" => self.train.drop_after = parse(key, value)?,
            "post_drop_epochs" => self.train.post_drop_epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lambda_up" => self.train.lambda_up = parse(key, value)?,
            "use_composite_loss" => self.train.use_composite_loss = parse_bool(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "sigma" => self.degrade.sigma = parse(key, value)?,
            "crop" => self.degrade.crop = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.degrade.validate()
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let display = path.as_ref().display().to_string();
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&display, e))?;
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{display}:{}: expected key = value", lineno + 1))
            })?;
            config
                .apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{display}:{}: {e}", lineno + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }
}
