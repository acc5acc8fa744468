//! Image feature extractors for FID.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use sprite_nn::{Activation, Conv2d, Parameters, Shape, Tensor};

use crate::error::{Error, Result};

/// Maps a fixed-size RGB image to a feature vector.
pub trait FeatureExtractor {
    /// Identifies the architecture and its configuration.
    fn id(&self) -> String;
    /// Hex SHA-256 over the weights, so reports from different weights never compare.
    fn weights_hash(&self) -> String;
    /// Side of the square input the extractor expects.
    fn input_size(&self) -> u32;
    fn feature_dim(&self) -> usize;
    fn features(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// A fixed, seeded random convolutional network. Random conv features are a
/// stand-in for a pretrained classifier: they still separate images by local
/// color and structure, and they need no downloaded weights.
#[derive(Clone, Debug)]
pub struct RandomConvExtractor {
    seed: u64,
    layers: Vec<Conv2d>,
}

impl RandomConvExtractor {
    pub const INPUT: u32 = 64;
    const WIDTHS: [usize; 3] = [32, 64, 64];
    /// Final 8x8 maps are average-pooled to 2x2.
    const POOL: usize = 2;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = 3;
        let mut layers = Vec::new();
        for (i, &out) in Self::WIDTHS.iter().enumerate() {
            let mut conv = Conv2d::new(&format!("feat{}", i + 1), in_c, out, 4, 2, 1, false).expect("valid conv");
            let std = (2.0 / (in_c * 16) as f32).sqrt();
            conv.weight.init_normal(0.0, std, &mut rng);
            layers.push(conv);
            in_c = out;
        }
        Self { seed, layers }
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn id(&self) -> String {
        format!("random-conv-v1(seed={})", self.seed)
    }

    fn weights_hash(&self) -> String {
        let mut h = Sha256::new();
        for conv in &self.layers {
            for p in conv.params() {
                h.update(p.name.as_bytes());
                for d in &p.shape {
                    h.update((*d as u64).to_le_bytes());
                }
                for v in &p.value {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    fn input_size(&self) -> u32 {
        Self::INPUT
    }

    fn feature_dim(&self) -> usize {
        Self::WIDTHS[Self::WIDTHS.len() - 1] * Self::POOL * Self::POOL
    }

    fn features(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let s = Self::INPUT;
        if image.dimensions() != (s, s) {
            return Err(Error::Invalid(format!(
                "extractor expects {s}x{s} images, got {:?}",
                image.dimensions()
            )));
        }
        let n = s as usize;
        let mut h = Tensor::from_fn(Shape::new(3, n, n), |c, y, x| {
            image.get_pixel(x as u32, y as u32).0[c] as f32 / 127.5 - 1.0
        });
        for conv in &self.layers {
            h = Activation::LeakyRelu(0.2).forward(&conv.forward(&h)?.0);
        }
        let (side, cell) = (h.height(), h.height() / Self::POOL);
        let mut out = Vec::with_capacity(self.feature_dim());
        for c in 0..h.channels() {
            for py in 0..Self::POOL {
                for px in 0..Self::POOL {
                    let mut sum = 0.0f64;
                    for y in py * cell..(py + 1) * cell {
                        for x in px * cell..(px + 1) * cell {
                            sum += h.get(c, y, x) as f64;
                        }
                    }
                    out.push(sum / (cell * cell) as f64);
                }
            }
        }
        debug_assert_eq!(side, cell * Self::POOL);
        Ok(out)
    }
}
