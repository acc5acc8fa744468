//! Executable form of a [`BlockSpec`].

use rand::Rng;
use sprite_nn::layers::{Conv2dCache, ConvTranspose2dCache, InstanceNormCache};
use sprite_nn::{Activation, Backprop, Conv2d, ConvTranspose2d, Dropout, InstanceNorm2d, Param, Parameters, Tensor};

use super::spec::{BlockKind, BlockSpec};
use crate::error::Result;

/// Whether dropout is active. Training mode carries the RNG that draws masks.
pub enum Mode<'a, R: Rng + ?Sized> {
    Train(&'a mut R),
    Eval,
}

impl<R: Rng + ?Sized> Mode<'_, R> {
    pub fn reborrow(&mut self) -> Mode<'_, R> {
        match self {
            Mode::Train(r) => Mode::Train(&mut **r),
            Mode::Eval => Mode::Eval,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Conv {
    Down(Conv2d),
    Up(ConvTranspose2d),
}

enum ConvCache {
    Down(Conv2dCache),
    Up(ConvTranspose2dCache),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub spec: BlockSpec,
    conv: Conv,
    norm: Option<InstanceNorm2d>,
    dropout: Option<Dropout>,
    activation: Activation,
}

pub struct BlockCache {
    conv: ConvCache,
    norm: Option<InstanceNormCache>,
    mask: Option<Vec<f32>>,
    output: Tensor,
}

impl BlockCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl Block {
    pub fn new(name: &str, spec: BlockSpec, in_channels: usize) -> Result<Self> {
        spec.validate(name)?;
        // A bias ahead of instance normalization would be cancelled by the mean subtraction.
        let bias = !spec.normalize;
        let conv = match spec.kind {
            BlockKind::Downsample => Conv::Down(Conv2d::new(
                &format!("{name}.conv"),
                in_channels,
                spec.filters,
                spec.kernel,
                spec.stride,
                spec.padding,
                bias,
            )?),
            BlockKind::Upsample => Conv::Up(ConvTranspose2d::new(
                &format!("{name}.deconv"),
                in_channels,
                spec.filters,
                spec.kernel,
                spec.stride,
                spec.padding,
                bias,
            )?),
        };
        Ok(Self {
            norm: spec.normalize.then(|| InstanceNorm2d::new(&format!("{name}.norm"), spec.filters)),
            dropout: if spec.dropout_rate > 0.0 {
                Some(Dropout::new(spec.dropout_rate)?)
            } else {
                None
            },
            activation: spec.activation.into(),
            conv,
            spec,
        })
    }

    pub fn in_channels(&self) -> usize {
        match &self.conv {
            Conv::Down(c) => c.in_channels,
            Conv::Up(c) => c.in_channels,
        }
    }

    /// Draws convolution weights from `N(0, std^2)`; biases stay zero, norms stay identity.
    pub fn init_weights<R: Rng + ?Sized>(&mut self, std: f32, rng: &mut R) {
        match &mut self.conv {
            Conv::Down(c) => c.weight.init_normal(0.0, std, rng),
            Conv::Up(c) => c.weight.init_normal(0.0, std, rng),
        }
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode<'_, R>) -> Result<(Tensor, BlockCache)> {
        let (mut h, conv) = match &self.conv {
            Conv::Down(c) => {
                let (y, cache) = c.forward(x)?;
                (y, ConvCache::Down(cache))
            }
            Conv::Up(c) => {
                let (y, cache) = c.forward(x)?;
                (y, ConvCache::Up(cache))
            }
        };
        let norm = match &self.norm {
            Some(n) => {
                let (y, cache) = n.forward(&h)?;
                h = y;
                Some(cache)
            }
            None => None,
        };
        let mask = match (&self.dropout, mode) {
            (Some(d), Mode::Train(rng)) => {
                let (y, mask) = d.forward_train(&h, rng);
                h = y;
                Some(mask)
            }
            _ => None,
        };
        let out = self.activation.forward(&h);
        Ok((
            out.clone(),
            BlockCache {
                conv,
                norm,
                mask,
                output: out,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Tensor, mode: Backprop) -> Result<Option<Tensor>> {
        let mut d = self.activation.backward(&cache.output, dy)?;
        if let Some(mask) = &cache.mask {
            d = Dropout::backward(mask, &d);
        }
        if let (Some(norm), Some(nc)) = (self.norm.as_mut(), cache.norm.as_ref()) {
            d = norm
                .backward(nc, &d, Backprop { params: mode.params, input: true })?
                .expect("input gradient requested");
        }
        let dx = match (&mut self.conv, &cache.conv) {
            (Conv::Down(c), ConvCache::Down(cc)) => c.backward(cc, &d, mode)?,
            (Conv::Up(c), ConvCache::Up(cc)) => c.backward(cc, &d, mode)?,
            _ => unreachable!("cache produced by a different block kind"),
        };
        Ok(dx)
    }

    pub fn has_norm(&self) -> bool {
        self.norm.is_some()
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout.is_some()
    }
}

impl Parameters for Block {
    fn params(&self) -> Vec<&Param> {
        let mut v = match &self.conv {
            Conv::Down(c) => c.params(),
            Conv::Up(c) => c.params(),
        };
        if let Some(n) = &self.norm {
            v.extend(n.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = match &mut self.conv {
            Conv::Down(c) => c.params_mut(),
            Conv::Up(c) => c.params_mut(),
        };
        if let Some(n) = &mut self.norm {
            v.extend(n.params_mut());
        }
        v
    }
}
