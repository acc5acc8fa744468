//! U-Net generator: strided-convolution encoder down to 1x1, mirrored
//! transposed-convolution decoder, skip connections between equal resolutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sprite_nn::{Backprop, Param, Parameters, Shape, Tensor};

use super::block::{Block, BlockCache, Mode};
use super::spec::{ActivationKind, BlockShapes, BlockSpec, Initializer, NetworkSpec, SkipConnection, NETWORK_SPEC_VERSION};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub input_size: usize,
    pub channels: usize,
    pub n_down: usize,
    pub encoder_filters: Vec<usize>,
    /// Number of leading decoder blocks with dropout.
    pub dropout_blocks: usize,
    pub dropout_rate: f32,
    pub skip_connections: bool,
    pub leaky_slope: f32,
    pub init_std: f32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            channels: 4,
            n_down: 6,
            encoder_filters: vec![64, 128, 256, 512, 512, 512],
            dropout_blocks: 3,
            dropout_rate: 0.5,
            skip_connections: true,
            leaky_slope: 0.2,
            init_std: 0.02,
        }
    }
}

impl GeneratorConfig {
    pub fn with_channels(channels: usize) -> Self {
        Self {
            channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.input_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "generator input size {} is not a power of two",
                self.input_size
            )));
        }
        let needed = self.input_size.trailing_zeros() as usize;
        if self.n_down != needed {
            let bottleneck = if self.n_down < needed {
                format!("{0}x{0}", self.input_size >> self.n_down)
            } else {
                "below 1x1".to_string()
            };
            return Err(Error::Config(format!(
                "generator needs {needed} downsampling blocks to reach a 1x1 bottleneck from {size}x{size}; \
                 n_down={} would leave it at {bottleneck}",
                self.n_down,
                size = self.input_size
            )));
        }
        if self.encoder_filters.len() != self.n_down {
            return Err(Error::Config(format!(
                "encoder_filters lists {} widths for {} blocks",
                self.encoder_filters.len(),
                self.n_down
            )));
        }
        if let Some(i) = self.encoder_filters.iter().position(|&f| f == 0) {
            return Err(Error::Config(format!("encoder block {} has zero filters", i + 1)));
        }
        if self.channels == 0 {
            return Err(Error::Config("generator needs at least one image channel".into()));
        }
        if self.dropout_blocks >= self.n_down {
            return Err(Error::Config(format!(
                "dropout on {} decoder blocks would include the output block",
                self.dropout_blocks
            )));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<BlockSpec> {
        self.encoder_filters
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let mut b = BlockSpec::down(f, i > 0);
                b.activation = ActivationKind::LeakyRelu(self.leaky_slope);
                b
            })
            .collect()
    }

    /// Output widths of the decoder blocks: each matches the encoder at the same
    /// resolution, ending with the image channels.
    pub fn decoder_filters(&self) -> Vec<usize> {
        let n = self.n_down;
        (0..n)
            .map(|j| if j + 1 < n { self.encoder_filters[n - 2 - j] } else { self.channels })
            .collect()
    }

    pub fn decoder_specs(&self) -> Vec<BlockSpec> {
        let n = self.n_down;
        self.decoder_filters()
            .into_iter()
            .enumerate()
            .map(|(j, f)| {
                if j + 1 == n {
                    let mut b = BlockSpec::up(f, 0.0);
                    b.normalize = false;
                    b.activation = ActivationKind::Tanh;
                    b
                } else {
                    BlockSpec::up(f, if j < self.dropout_blocks { self.dropout_rate } else { 0.0 })
                }
            })
            .collect()
    }

    /// Encoder `i` feeds decoder `n - i` (1-based) for `i = 1..n-1`.
    pub fn skip_wiring(&self) -> Vec<SkipConnection> {
        if !self.skip_connections {
            return Vec::new();
        }
        (1..self.n_down)
            .map(|i| SkipConnection {
                encoder: i,
                decoder: self.n_down - i,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    encoder: Vec<Block>,
    decoder: Vec<Block>,
    seed: u64,
}

/// Activations recorded by a forward pass for the matching backward pass.
pub struct GeneratorTape {
    encoder: Vec<BlockCache>,
    decoder: Vec<BlockCache>,
}

impl GeneratorTape {
    pub fn bottleneck(&self) -> &Tensor {
        self.encoder.last().expect("non-empty encoder").output()
    }
}

impl Generator {
    pub fn build(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n_down;
        let mut encoder = Vec::with_capacity(n);
        let mut in_c = config.channels;
        for (i, spec) in config.encoder_specs().into_iter().enumerate() {
            let out = spec.filters;
            encoder.push(Block::new(&format!("enc{}", i + 1), spec, in_c)?);
            in_c = out;
        }
        let enc_f = &config.encoder_filters;
        let mut decoder = Vec::with_capacity(n);
        for (j, spec) in config.decoder_specs().into_iter().enumerate() {
            let out = spec.filters;
            decoder.push(Block::new(&format!("dec{}", j + 1), spec, in_c)?);
            in_c = out;
            if config.skip_connections && j + 1 < n {
                in_c += enc_f[n - 2 - j];
            }
        }
        let mut g = Self {
            config,
            encoder,
            decoder,
            seed,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = g.config.init_std;
        for b in g.encoder.iter_mut().chain(g.decoder.iter_mut()) {
            b.init_weights(std, &mut rng);
        }
        Ok(g)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn encoder(&self) -> &[Block] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[Block] {
        &self.decoder
    }

    pub fn image_shape(&self) -> Shape {
        Shape::new(self.config.channels, self.config.input_size, self.config.input_size)
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mut mode: Mode<'_, R>) -> Result<(Tensor, GeneratorTape)> {
        x.ensure_shape("Generator::forward", self.image_shape())?;
        let n = self.config.n_down;
        let mut enc = Vec::with_capacity(n);
        let mut h = x.clone();
        for b in &self.encoder {
            let (y, cache) = b.forward(&h, mode.reborrow())?;
            h = y;
            enc.push(cache);
        }
        let mut dec = Vec::with_capacity(n);
        for (j, b) in self.decoder.iter().enumerate() {
            let (y, cache) = b.forward(&h, mode.reborrow())?;
            h = if self.config.skip_connections && j + 1 < n {
                y.concat_channels(enc[n - 2 - j].output())?
            } else {
                y
            };
            dec.push(cache);
        }
        Ok((h, GeneratorTape { encoder: enc, decoder: dec }))
    }

    /// Inference-mode translation (dropout off, deterministic).
    pub fn generate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward::<ChaCha8Rng>(x, Mode::Eval)?.0)
    }

    /// Accumulates parameter gradients given `dL/d output`.
    pub fn backward(&mut self, tape: &GeneratorTape, dy: &Tensor) -> Result<()> {
        dy.ensure_shape("Generator::backward", self.image_shape())?;
        let n = self.config.n_down;
        let mut d_enc: Vec<Option<Tensor>> = vec![None; n];
        let mut d = dy.clone();
        for j in (0..n).rev() {
            if self.config.skip_connections && j + 1 < n {
                let (d_own, d_skip) = d.split_channels(self.decoder[j].spec.filters)?;
                accumulate(&mut d_enc[n - 2 - j], d_skip)?;
                d = d_own;
            }
            d = self.decoder[j]
                .backward(&tape.decoder[j], &d, Backprop::FULL)?
                .expect("input gradient requested");
        }
        accumulate(&mut d_enc[n - 1], d)?;
        for i in (0..n).rev() {
            let g = d_enc[i].take().expect("every encoder output receives a gradient");
            let mode = if i == 0 { Backprop::PARAMS_ONLY } else { Backprop::FULL };
            if let Some(dx) = self.encoder[i].backward(&tape.encoder[i], &g, mode)? {
                accumulate(&mut d_enc[i - 1], dx)?;
            }
        }
        Ok(())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let mut shapes = Vec::new();
        let mut size = self.config.input_size;
        let mut in_c = self.config.channels;
        for b in &self.encoder {
            let out = b.spec.output_size(size).expect("validated");
            shapes.push(BlockShapes {
                input: [in_c, size, size],
                output: [b.spec.filters, out, out],
            });
            size = out;
            in_c = b.spec.filters;
        }
        for b in &self.decoder {
            let out = b.spec.output_size(size).expect("validated");
            shapes.push(BlockShapes {
                input: [b.in_channels(), size, size],
                output: [b.spec.filters, out, out],
            });
            size = out;
        }
        let s = self.image_shape();
        NetworkSpec {
            version: NETWORK_SPEC_VERSION,
            role: "generator".into(),
            input: [s.c, s.h, s.w],
            output: [s.c, s.h, s.w],
            blocks: self.encoder.iter().chain(&self.decoder).map(|b| b.spec.clone()).collect(),
            shapes,
            wiring: self.config.skip_wiring(),
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

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g)?,
        None => *slot = Some(g),
    }
    Ok(())
}

impl Parameters for Generator {
    fn params(&self) -> Vec<&Param> {
        self.encoder.iter().chain(&self.decoder).flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|b| b.params_mut())
            .collect()
    }
}
