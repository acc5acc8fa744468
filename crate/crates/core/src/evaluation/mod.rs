//! FID between generated and ground-truth sprites, comparison grids,
//! nearest-training-match lookup, and the dangling-pixel count.

mod extractor;
mod fid;
mod grid;
mod nearest;

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sprite_nn::Tensor;

pub use extractor::{FeatureExtractor, RandomConvExtractor};
pub use fid::{frechet_distance, frechet_distance_detailed, gaussian_stats, FeatureStats, Frechet, SQRT_JITTER};
pub use grid::{render_grid, LABEL_BAND};
pub use nearest::{nearest_training_match, sprite_distance, MatchMetric};

use crate::dataset::{denormalize_value, to_channels, DatasetSplit, PairedExample};
use crate::error::{Error, Result};
use crate::model::Generator;

pub const WHITE: [u8; 3] = [255, 255, 255];

/// Flattens sprites for a feature extractor: alpha-composite over
/// `background`, quantize to 8 bits, nearest-neighbor resize to `size`.
/// Three-channel tensors are taken as already opaque.
pub fn preprocess_for_fid(images: &[&Tensor], background: [u8; 3], size: u32) -> Result<Vec<RgbImage>> {
    images
        .iter()
        .map(|t| {
            let c = t.channels();
            if c != 3 && c != 4 {
                return Err(Error::Invalid(format!("cannot composite a {c}-channel image")));
            }
            let (h, w) = (t.height(), t.width());
            let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                let a = if c == 4 { ((t.get(3, y, x) + 1.0) * 0.5).clamp(0.0, 1.0) } else { 1.0 };
                Rgb(std::array::from_fn(|ch| {
                    let fg = (t.get(ch, y, x) + 1.0) * 0.5;
                    let bg = background[ch] as f32 / 255.0;
                    denormalize_value((fg * a + bg * (1.0 - a)) * 2.0 - 1.0)
                }))
            });
            Ok(if img.dimensions() == (size, size) {
                img
            } else {
                image::imageops::resize(&img, size, size, image::imageops::FilterType::Nearest)
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidPreprocessing {
    pub background: [u8; 3],
    pub resize: String,
    pub size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub fid_train: f64,
    pub fid_test: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub extractor_id: String,
    pub extractor_hash: String,
    pub preprocessing: FidPreprocessing,
    /// Whether a covariance square root needed diagonal jitter.
    pub jittered: bool,
    pub step: Option<u64>,
}

fn features(images: &[RgbImage], extractor: &dyn FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|i| extractor.features(i)).collect()
}

/// FID between two image sets under the given extractor.
pub fn fid_between(a: &[&Tensor], b: &[&Tensor], extractor: &dyn FeatureExtractor, background: [u8; 3]) -> Result<Frechet> {
    let size = extractor.input_size();
    let fa = features(&preprocess_for_fid(a, background, size)?, extractor)?;
    let fb = features(&preprocess_for_fid(b, background, size)?, extractor)?;
    frechet_distance_detailed(&gaussian_stats(&fa)?, &gaussian_stats(&fb)?)
}

/// FID of `translate` on both halves of a split. `translate` maps a pair to
/// the generated target; ground truth is the target in the same channel view.
pub fn evaluate_with(
    split: &DatasetSplit,
    extractor: &dyn FeatureExtractor,
    background: [u8; 3],
    channels: usize,
    mut translate: impl FnMut(&PairedExample) -> Result<Tensor>,
) -> Result<FidReport> {
    for (name, half) in [("train", &split.train), ("test", &split.test)] {
        if half.len() < 2 {
            return Err(Error::Invalid(format!(
                "{name} split has {} example(s); FID needs at least 2",
                half.len()
            )));
        }
    }
    let mut fid = |pairs: &[PairedExample]| -> Result<Frechet> {
        let generated = pairs.iter().map(&mut translate).collect::<Result<Vec<_>>>()?;
        let truth = pairs
            .iter()
            .map(|p| to_channels(p.target.pixels(), channels))
            .collect::<Result<Vec<_>>>()?;
        fid_between(
            &generated.iter().collect::<Vec<_>>(),
            &truth.iter().collect::<Vec<_>>(),
            extractor,
            background,
        )
    };
    let train = fid(&split.train)?;
    let test = fid(&split.test)?;
    Ok(FidReport {
        fid_train: train.distance,
        fid_test: test.distance,
        n_train: split.train.len(),
        n_test: split.test.len(),
        extractor_id: extractor.id(),
        extractor_hash: extractor.weights_hash(),
        preprocessing: FidPreprocessing {
            background,
            resize: "nearest".into(),
            size: extractor.input_size(),
        },
        jittered: train.jittered || test.jittered,
        step: None,
    })
}

/// FID of a generator (inference mode) on both halves of a split.
pub fn evaluate_model(
    generator: &Generator,
    split: &DatasetSplit,
    extractor: &dyn FeatureExtractor,
    background: [u8; 3],
) -> Result<FidReport> {
    let c = generator.image_shape().c;
    evaluate_with(split, extractor, background, c, |p| {
        generator.generate(&to_channels(p.source.pixels(), c)?)
    })
}

/// Writes a report via a temporary file and rename, so readers never see a
/// partial document.
pub fn write_report(path: &Path, report: &FidReport) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let tmp = path.with_extension("json.partial");
    let text = serde_json::to_string_pretty(report).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(&tmp, text + "\n").map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

pub fn read_report(path: &Path) -> Result<FidReport> {
    let text = fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source,
        },
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Minimum per-channel deviation (of 255) from the background for a pixel
/// to count as visibly drawn.
pub const DANGLING_THRESHOLD: u8 = 32;

/// Fraction of image pixels that lie outside the ground-truth silhouette
/// yet are visibly drawn once the generated image is composited over
/// `background`. RGB outputs are judged the same way as RGBA ones.
pub fn dangling_pixel_rate(generated: &Tensor, truth_alpha: &[f32], background: [u8; 3]) -> Result<f64> {
    let plane = generated.shape().plane();
    if truth_alpha.len() != plane {
        return Err(Error::Invalid(format!(
            "alpha mask has {} entries for a {}-pixel image",
            truth_alpha.len(),
            plane
        )));
    }
    let flat = &preprocess_for_fid(&[generated], background, generated.width() as u32)?[0];
    let count = flat
        .pixels()
        .zip(truth_alpha)
        .filter(|(px, &a)| a <= 0.0 && px.0.iter().zip(background).any(|(&v, b)| v.abs_diff(b) >= DANGLING_THRESHOLD))
        .count();
    Ok(count as f64 / plane as f64)
}
