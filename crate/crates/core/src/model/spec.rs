//! Declarative layer-stack descriptions for both networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Strided convolution.
    Downsample,
    /// Fractionally strided (transposed) convolution.
    Upsample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "slope")]
pub enum ActivationKind {
    LeakyRelu(f32),
    Relu,
    Tanh,
    Sigmoid,
    None,
}

impl From<ActivationKind> for sprite_nn::Activation {
    fn from(a: ActivationKind) -> Self {
        match a {
            ActivationKind::LeakyRelu(s) => sprite_nn::Activation::LeakyRelu(s),
            ActivationKind::Relu => sprite_nn::Activation::Relu,
            ActivationKind::Tanh => sprite_nn::Activation::Tanh,
            ActivationKind::Sigmoid => sprite_nn::Activation::Sigmoid,
            ActivationKind::None => sprite_nn::Activation::Identity,
        }
    }
}

/// One convolution (or transposed convolution) with its normalization,
/// dropout, and activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub normalize: bool,
    pub dropout_rate: f32,
    pub activation: ActivationKind,
}

impl BlockSpec {
    /// The encoder block: 4x4 stride-2 convolution halving the resolution.
    pub fn down(filters: usize, normalize: bool) -> Self {
        Self {
            kind: BlockKind::Downsample,
            filters,
            kernel: 4,
            stride: 2,
            padding: 1,
            normalize,
            dropout_rate: 0.0,
            activation: ActivationKind::LeakyRelu(0.2),
        }
    }

    /// The decoder block: 4x4 stride-2 transposed convolution doubling the resolution.
    pub fn up(filters: usize, dropout_rate: f32) -> Self {
        Self {
            kind: BlockKind::Upsample,
            filters,
            kernel: 4,
            stride: 2,
            padding: 1,
            normalize: true,
            dropout_rate,
            activation: ActivationKind::Relu,
        }
    }

    /// An unpadded convolution, as used by the patch discriminators.
    pub fn valid_conv(filters: usize, kernel: usize, stride: usize, normalize: bool, activation: ActivationKind) -> Self {
        Self {
            kind: BlockKind::Downsample,
            filters,
            kernel,
            stride,
            padding: 0,
            normalize,
            dropout_rate: 0.0,
            activation,
        }
    }

    pub fn validate(&self, at: &str) -> Result<()> {
        if self.filters == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "{at}: filters, kernel and stride must be positive (got {}, {}, {})",
                self.filters, self.kernel, self.stride
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("{at}: dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.dropout_rate > 0.0 && self.kind != BlockKind::Upsample {
            return Err(Error::Config(format!("{at}: dropout is only valid on upsample blocks")));
        }
        Ok(())
    }

    /// Spatial size after this block, or `None` if the input is too small.
    pub fn output_size(&self, input: usize) -> Option<usize> {
        match self.kind {
            BlockKind::Downsample => {
                let padded = input + 2 * self.padding;
                (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
            }
            BlockKind::Upsample => ((input.checked_sub(1)? * self.stride + self.kernel).checked_sub(2 * self.padding))
                .filter(|&v| v > 0),
        }
    }
}

/// Where a skip connection lands: the output of encoder block `encoder` is
/// concatenated onto the output of decoder block `decoder` (both 1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipConnection {
    pub encoder: usize,
    pub decoder: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Initializer {
    pub distribution: String,
    pub mean: f32,
    pub std: f32,
    pub seed: u64,
}

/// Shapes flowing through one block, recorded for the JSON description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockShapes {
    pub input: [usize; 3],
    pub output: [usize; 3],
}

pub const NETWORK_SPEC_VERSION: u32 = 1;

/// Serializable description of a built network, stored beside its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub version: u32,
    pub role: String,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub blocks: Vec<BlockSpec>,
    pub shapes: Vec<BlockShapes>,
    pub wiring: Vec<SkipConnection>,
    pub initializer: Initializer,
    pub param_count: usize,
}

impl NetworkSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }
}
