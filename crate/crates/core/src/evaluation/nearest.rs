use serde::{Deserialize, Serialize};
use sprite_nn::Tensor;

use crate::dataset::{PairedExample, Sprite};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MatchMetric {
    /// Mean absolute difference over all channels.
    L1,
    /// L1 with the alpha channel counted `alpha_weight` times, so silhouette
    /// differences outrank palette differences.
    AlphaWeightedL1 { alpha_weight: f32 },
}

pub fn sprite_distance(a: &Tensor, b: &Tensor, metric: MatchMetric) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Invalid(format!("cannot compare {} with {}", a.shape(), b.shape())));
    }
    let plane = a.shape().plane();
    let alpha_weight = match metric {
        MatchMetric::L1 => 1.0,
        MatchMetric::AlphaWeightedL1 { alpha_weight } => alpha_weight as f64,
    };
    let mut sum = 0.0;
    let mut weight = 0.0;
    for c in 0..a.channels() {
        let w = if c == 3 { alpha_weight } else { 1.0 };
        let s: f64 = a
            .channel(c)
            .iter()
            .zip(b.channel(c))
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum();
        sum += w * s;
        weight += w * plane as f64;
    }
    Ok(if weight > 0.0 { sum / weight } else { 0.0 })
}

/// The training pair whose source is closest to `test`. Ties go to the
/// smallest `(character_id, frame_index)`.
pub fn nearest_training_match<'a>(
    test: &Sprite,
    train: &'a [PairedExample],
    metric: MatchMetric,
) -> Result<(&'a PairedExample, f64)> {
    let mut best: Option<(&PairedExample, f64)> = None;
    for p in train {
        let d = sprite_distance(test.pixels(), p.source.pixels(), metric)?;
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && (&p.character_id, p.frame_index) < (&b.character_id, b.frame_index)),
        };
        if better {
            best = Some((p, d));
        }
    }
    best.ok_or_else(|| Error::Invalid("no training pairs to match against".into()))
}
