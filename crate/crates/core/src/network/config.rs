use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One convolutional stage: a `kernel × kernel` same-padded convolution
/// followed by PReLU and 2×2 max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvBlock {
    pub kernel: usize,
    pub out_channels: usize,
}

/// Shape of the tracking network.
///
/// Each conv block feeds a 1×1 skip convolution whose output is flattened
/// into the appearance embedding alongside the final block's output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub crop_size: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub skip_channels: Vec<usize>,
    pub embed_dim: usize,
    pub lstm_units: usize,
    pub seed: u64,
}

/// Number of stacked LSTM layers.
pub const LSTM_LAYERS: usize = 2;

impl NetworkConfig {
    /// CPU-trainable preset: 48 px crops, three conv blocks.
    pub fn desk() -> Self {
        Self {
            crop_size: 48,
            conv_blocks: vec![
                ConvBlock { kernel: 5, out_channels: 16 },
                ConvBlock { kernel: 3, out_channels: 32 },
                ConvBlock { kernel: 3, out_channels: 64 },
            ],
            skip_channels: vec![4, 8, 16],
            embed_dim: 256,
            lstm_units: 128,
            seed: 0,
        }
    }

    /// Full-width reference sizes (2048-unit embedding, 1024-unit LSTMs).
    /// Recorded for completeness; not practical to train on a CPU.
    pub fn full() -> Self {
        Self {
            crop_size: 224,
            conv_blocks: vec![
                ConvBlock { kernel: 11, out_channels: 96 },
                ConvBlock { kernel: 5, out_channels: 256 },
                ConvBlock { kernel: 3, out_channels: 256 },
            ],
            skip_channels: vec![16, 32, 64],
            embed_dim: 2048,
            lstm_units: 1024,
            seed: 0,
        }
    }

    /// Tiny network used by gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            crop_size: 8,
            conv_blocks: vec![ConvBlock { kernel: 3, out_channels: 3 }, ConvBlock { kernel: 3, out_channels: 4 }],
            skip_channels: vec![2, 4],
            embed_dim: 6,
            lstm_units: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Usage(format!("network config: {msg}")));
        if self.conv_blocks.is_empty() {
            return bad("at least one conv block is required".into());
        }
        if self.skip_channels.len() != self.conv_blocks.len() {
            return bad(format!(
                "{} skip taps for {} pool stages; need one per stage",
                self.skip_channels.len(),
                self.conv_blocks.len()
            ));
        }
        for w in self.skip_channels.windows(2) {
            if w[1] != 2 * w[0] {
                return bad(format!("skip channels must double stage to stage, got {:?}", self.skip_channels));
            }
        }
        if self.skip_channels.contains(&0) {
            return bad("skip channels must be positive".into());
        }
        for b in &self.conv_blocks {
            if b.kernel == 0 || b.kernel % 2 == 0 || b.out_channels == 0 {
                return bad(format!("conv block {b:?} needs an odd kernel and positive channels"));
            }
        }
        let factor = 1usize << self.conv_blocks.len();
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(factor) {
            return bad(format!("crop size {} must be a positive multiple of {factor}", self.crop_size));
        }
        if self.embed_dim == 0 || self.lstm_units == 0 {
            return bad("embed_dim and lstm_units must be positive".into());
        }
        Ok(())
    }

    /// Spatial side length after each pool stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        (1..=self.conv_blocks.len()).map(|i| self.crop_size >> i).collect()
    }

    /// Length of one stream's flattened skip + final features.
    pub fn stream_feature_len(&self) -> usize {
        let sizes = self.stage_sizes();
        let skips: usize = sizes.iter().zip(&self.skip_channels).map(|(s, c)| s * s * c).sum();
        let last = *sizes.last().unwrap();
        skips + last * last * self.conv_blocks.last().unwrap().out_channels
    }
}
