//! Conditional patch discriminator: scores every receptive-field-sized patch
//! of a candidate image, given the source image as a condition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sprite_nn::{Backprop, Param, Parameters, Shape, Tensor};

use super::block::{Block, BlockCache, Mode};
use super::receptive::receptive_field;
use super::spec::{ActivationKind, BlockKind, BlockShapes, BlockSpec, Initializer, NetworkSpec, NETWORK_SPEC_VERSION};
use crate::error::{Error, Result};

/// Patch sizes with a shipped, validated layer stack.
pub const SHIPPED_PATCH_SIZES: [usize; 4] = [2, 5, 11, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub patch_size: usize,
    /// Channels of one image; the network sees condition and candidate stacked.
    pub channels: usize,
    pub input_size: usize,
    pub layer_stack: Vec<BlockSpec>,
    pub init_std: f32,
}

fn lrelu() -> ActivationKind {
    ActivationKind::LeakyRelu(0.2)
}

fn score(kernel: usize, stride: usize) -> BlockSpec {
    BlockSpec::valid_conv(1, kernel, stride, false, ActivationKind::Sigmoid)
}

/// The default stack for a patch size, if one ships.
///
/// Stacks below 64 carry no instance normalization: it pools statistics over
/// the whole image and would make every score depend on every pixel. The 2x2
/// stack adds 1x1 hidden layers so its verdict is not a linear function of
/// the patch; they leave the receptive field unchanged.
pub fn shipped_stack(patch_size: usize) -> Option<Vec<BlockSpec>> {
    let stack = match patch_size {
        2 => vec![
            BlockSpec::valid_conv(64, 2, 1, false, lrelu()),
            BlockSpec::valid_conv(128, 1, 1, false, lrelu()),
            score(1, 1),
        ],
        5 => vec![BlockSpec::valid_conv(64, 4, 1, false, lrelu()), score(2, 1)],
        11 => vec![
            BlockSpec::valid_conv(64, 3, 2, false, lrelu()),
            BlockSpec::valid_conv(128, 4, 1, false, lrelu()),
            score(2, 1),
        ],
        64 => vec![
            BlockSpec::valid_conv(64, 2, 2, false, lrelu()),
            BlockSpec::valid_conv(128, 2, 2, true, lrelu()),
            BlockSpec::valid_conv(256, 2, 2, true, lrelu()),
            BlockSpec::valid_conv(512, 2, 2, true, lrelu()),
            BlockSpec::valid_conv(512, 2, 2, true, lrelu()),
            score(2, 2),
        ],
        _ => return None,
    };
    Some(stack)
}

impl DiscriminatorConfig {
    pub fn for_patch_size(patch_size: usize, channels: usize) -> Result<Self> {
        let layer_stack = shipped_stack(patch_size).ok_or_else(|| {
            Error::Config(format!(
                "no validated discriminator stack for patch size {patch_size}; shipped sizes are {SHIPPED_PATCH_SIZES:?}"
            ))
        })?;
        Ok(Self {
            patch_size,
            channels,
            input_size: 64,
            layer_stack,
            init_std: 0.02,
        })
    }

    pub fn input_channels(&self) -> usize {
        2 * self.channels
    }

    /// Side of the square score grid, checking the stack along the way.
    pub fn validate(&self) -> Result<usize> {
        if self.layer_stack.is_empty() {
            return Err(Error::Config("discriminator stack is empty".into()));
        }
        let mut size = self.input_size;
        for (i, b) in self.layer_stack.iter().enumerate() {
            let at = format!("disc{}", i + 1);
            b.validate(&at)?;
            if b.kind != BlockKind::Downsample {
                return Err(Error::Config(format!("{at}: discriminator blocks must be convolutions")));
            }
            size = b
                .output_size(size)
                .ok_or_else(|| Error::Config(format!("{at}: input {size}x{size} smaller than kernel {}", b.kernel)))?;
        }
        let last = self.layer_stack.last().expect("non-empty");
        if last.filters != 1 || last.activation != ActivationKind::Sigmoid {
            return Err(Error::Config(
                "discriminator must end in a single-filter sigmoid scoring layer".into(),
            ));
        }
        let rf = receptive_field(&self.layer_stack).size;
        if rf != self.patch_size {
            return Err(Error::Config(format!(
                "discriminator stack has receptive field {rf}, but patch size {} was requested",
                self.patch_size
            )));
        }
        Ok(size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    blocks: Vec<Block>,
    grid: usize,
    seed: u64,
}

pub struct DiscriminatorTape {
    caches: Vec<BlockCache>,
}

impl Discriminator {
    pub fn build(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        let grid = config.validate()?;
        let mut blocks = Vec::with_capacity(config.layer_stack.len());
        let mut in_c = config.input_channels();
        for (i, spec) in config.layer_stack.iter().enumerate() {
            blocks.push(Block::new(&format!("disc{}", i + 1), spec.clone(), in_c)?);
            in_c = spec.filters;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut blocks {
            b.init_weights(config.init_std, &mut rng);
        }
        Ok(Self {
            config,
            blocks,
            grid,
            seed,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn grid_size(&self) -> usize {
        self.grid
    }

    fn image_shape(&self) -> Shape {
        Shape::new(self.config.channels, self.config.input_size, self.config.input_size)
    }

    /// Per-patch probabilities that `candidate` is the real target for `condition`.
    pub fn forward(&self, condition: &Tensor, candidate: &Tensor) -> Result<(Tensor, DiscriminatorTape)> {
        condition.ensure_shape("Discriminator condition", self.image_shape())?;
        candidate.ensure_shape("Discriminator candidate", self.image_shape())?;
        let mut h = condition.concat_channels(candidate)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, cache) = b.forward::<ChaCha8Rng>(&h, Mode::Eval)?;
            h = y;
            caches.push(cache);
        }
        Ok((h, DiscriminatorTape { caches }))
    }

    pub fn score(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        Ok(self.forward(condition, candidate)?.0)
    }

    /// Backpropagates `dL/d grid`. Returns `dL/d candidate` when `mode.input` is set.
    pub fn backward(&mut self, tape: &DiscriminatorTape, d_grid: &Tensor, mode: Backprop) -> Result<Option<Tensor>> {
        let mut d = d_grid.clone();
        let last = self.blocks.len() - 1;
        for i in (0..=last).rev() {
            let want_input = i > 0 || mode.input;
            let step = Backprop {
                params: mode.params,
                input: want_input,
            };
            match self.blocks[i].backward(&tape.caches[i], &d, step)? {
                Some(dx) => d = dx,
                None => return Ok(None),
            }
        }
        let (_, d_candidate) = d.split_channels(self.config.channels)?;
        Ok(Some(d_candidate))
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let mut shapes = Vec::new();
        let mut size = self.config.input_size;
        let mut in_c = self.config.input_channels();
        for b in &self.blocks {
            let out = b.spec.output_size(size).expect("validated");
            shapes.push(BlockShapes {
                input: [in_c, size, size],
                output: [b.spec.filters, out, out],
            });
            in_c = b.spec.filters;
            size = out;
        }
        let s = self.config.input_size;
        NetworkSpec {
            version: NETWORK_SPEC_VERSION,
            role: format!("discriminator(patch={})", self.config.patch_size),
            input: [self.config.input_channels(), s, s],
            output: [1, self.grid, self.grid],
            blocks: self.config.layer_stack.clone(),
            shapes,
            wiring: Vec::new(),
            initializer: Initializer {
                distribution: "normal".into(),
                mean: 0.0,
                std: self.config.init_std,
                seed: self.seed,
            },
            param_count: self.param_count(),
        }
    }
}

impl Parameters for Discriminator {
    fn params(&self) -> Vec<&Param> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }
}
