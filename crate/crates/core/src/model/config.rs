use crate::error::{Error, Result};

/// Architecture hyperparameters. The defaults are the full-size network;
/// tests shrink channel widths to keep runtimes at desk scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Temporal half-window: the input holds 2T+1 frames.
    pub t: usize,
    /// Width of every trunk feature map.
    pub base_channels: usize,
    /// Channels added by each dense unit inside a block.
    pub inner_growth: usize,
    /// Channels added per outer dense block. Equals `base_channels`: each
    /// block compresses back to the trunk width, which is what the outer
    /// concatenation accumulates.
    pub outer_growth: usize,
    /// Dense units per inner block.
    pub inner_units: usize,
    /// Outer blocks in the spatio-temporal fusion stage.
    pub outer_blocks_3d: usize,
    /// Outer blocks in the reconstruction stage.
    pub outer_blocks_2d: usize,
    /// Upscaling factor; only 4 is supported.
    pub scale: usize,
    /// Temporal attention inside the group feature extractors.
    pub attention_in_extraction: bool,
    /// Temporal attention inside the fusion dense blocks.
    pub attention_in_fusion: bool,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            t: 2,
            base_channels: 64,
            inner_growth: 16,
            outer_growth: 64,
            inner_units: 4,
            outer_blocks_3d: 3,
            outer_blocks_2d: 3,
            scale: 4,
            attention_in_extraction: true,
            attention_in_fusion: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 1 {
            return Err(Error::Config("t must be >= 1".into()));
        }
        if self.scale != 4 {
            return Err(Error::Config(format!("scale {} unsupported, only 4", self.scale)));
        }
        if self.base_channels == 0 || self.inner_growth == 0 || self.inner_units == 0 {
            return Err(Error::Config("channel widths and unit counts must be positive".into()));
        }
        if self.outer_blocks_3d == 0 || self.outer_blocks_2d == 0 {
            return Err(Error::Config("outer block counts must be positive".into()));
        }
        if self.outer_growth != self.base_channels {
            return Err(Error::Config(format!(
                "outer_growth {} must equal base_channels {}: blocks emit trunk-width outputs",
                self.outer_growth, self.base_channels
            )));
        }
        Ok(())
    }

    /// Number of input frames, 2T+1.
    pub fn frames(&self) -> usize {
        2 * self.t + 1
    }

    /// Frames per temporal group (each group includes the reference), T+1.
    pub fn group_len(&self) -> usize {
        self.t + 1
    }

    /// Temporal depth of the fusion stack: both groups plus the reference
    /// features, 2(T+1)+1.
    pub fn fusion_depth(&self) -> usize {
        2 * self.group_len() + 1
    }

    /// Widest channel count reached inside an inner dense block.
    pub fn inner_peak(&self) -> usize {
        self.base_channels + self.inner_units * self.inner_growth
    }
}
