//! Sprite ingestion: sheet slicing, alpha synthesis, padding to the canonical
//! canvas, normalization, pose pairing, splitting, and synthetic fixtures.

mod imaging;
mod io;
mod pairs;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sprite_nn::{Shape, Tensor};

pub use imaging::{
    denormalize, denormalize_value, normalize, normalize_value, pad_to_canvas, slice_sheet, synthesize_alpha, GridLayout,
    RawSheet, SheetCell, SheetPixels, CANVAS,
};
pub use io::{
    load_canonical, load_descriptor, parse_descriptor, prepare_dataset, read_manifest, read_source, write_canonical, DatasetDescriptor,
    ManifestRow, PrepareSummary, SourceLayout, MANIFEST_FILE,
};
pub use pairs::{build_pairs, split, train_count, DatasetSplit, PairReport, SplitGranularity};
pub use synthetic::{generate_synthetic_dataset, PartLibrary};

use crate::error::{Error, Result};

/// Facing direction of a character.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pose {
    Front,
    Right,
    Back,
    Left,
}

impl Pose {
    pub const ALL: [Pose; 4] = [Pose::Front, Pose::Right, Pose::Back, Pose::Left];

    pub fn as_str(self) -> &'static str {
        match self {
            Pose::Front => "front",
            Pose::Right => "right",
            Pose::Back => "back",
            Pose::Left => "left",
        }
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "front" => Ok(Pose::Front),
            "right" => Ok(Pose::Right),
            "back" => Ok(Pose::Back),
            "left" => Ok(Pose::Left),
            other => Err(Error::Config(format!(
                "unknown pose {other:?}; expected front, right, back or left"
            ))),
        }
    }
}

/// The canonical sprite shape: 64x64 RGBA.
pub const SPRITE_SHAPE: Shape = Shape::new(4, CANVAS as usize, CANVAS as usize);

/// One canonical sprite: 64x64 RGBA with every component in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pixels: Tensor,
    pub pose: Pose,
    pub character_id: String,
    pub frame_index: usize,
}

impl Sprite {
    pub fn new(pixels: Tensor, pose: Pose, character_id: impl Into<String>, frame_index: usize) -> Result<Self> {
        if pixels.shape() != SPRITE_SHAPE {
            return Err(Error::Invalid(format!(
                "sprite must be {SPRITE_SHAPE}, got {}",
                pixels.shape()
            )));
        }
        if let Some(v) = pixels.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("sprite component {v} outside [-1, 1]")));
        }
        Ok(Self {
            pixels,
            pose,
            character_id: character_id.into(),
            frame_index,
        })
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    /// Alpha channel in [-1, 1].
    pub fn alpha(&self) -> &[f32] {
        self.pixels.channel(3)
    }
}

/// The view of a canonical RGBA sprite a `channels`-channel model works
/// with: RGBA unchanged, or RGB alpha-composited over white.
pub fn to_channels(pixels: &Tensor, channels: usize) -> Result<Tensor> {
    pixels.ensure_shape("to_channels", SPRITE_SHAPE)?;
    match channels {
        4 => Ok(pixels.clone()),
        3 => {
            let alpha = pixels.channel(3).to_vec();
            let (h, w) = (pixels.height(), pixels.width());
            Ok(Tensor::from_fn(Shape::new(3, h, w), |c, y, x| {
                let a = (alpha[y * w + x] + 1.0) * 0.5;
                a * pixels.get(c, y, x) + (1.0 - a)
            }))
        }
        c => Err(Error::Config(format!("models use 3 or 4 channels, not {c}"))),
    }
}

/// All sprites of one character, keyed by pose, frames in order.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterRecord {
    pub character_id: String,
    pub sprites: BTreeMap<Pose, Vec<Sprite>>,
}

impl CharacterRecord {
    pub fn new(character_id: impl Into<String>) -> Self {
        Self {
            character_id: character_id.into(),
            sprites: BTreeMap::new(),
        }
    }

    /// Inserts a sprite at its frame position, keeping frames ordered.
    pub fn insert(&mut self, sprite: Sprite) -> Result<()> {
        if sprite.character_id != self.character_id {
            return Err(Error::Invalid(format!(
                "sprite of {} added to record {}",
                sprite.character_id, self.character_id
            )));
        }
        let frames = self.sprites.entry(sprite.pose).or_default();
        let at = frames.partition_point(|s| s.frame_index < sprite.frame_index);
        if frames.get(at).is_some_and(|s| s.frame_index == sprite.frame_index) {
            return Err(Error::Invalid(format!(
                "duplicate {} frame {} for {}",
                sprite.pose, sprite.frame_index, self.character_id
            )));
        }
        frames.insert(at, sprite);
        Ok(())
    }

    pub fn frames(&self, pose: Pose) -> &[Sprite] {
        self.sprites.get(&pose).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sprite_count(&self) -> usize {
        self.sprites.values().map(Vec::len).sum()
    }
}

/// A (source pose, target pose) pair of the same character frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedExample {
    pub source: Sprite,
    pub target: Sprite,
    pub character_id: String,
    pub frame_index: usize,
}

impl PairedExample {
    pub fn new(source: Sprite, target: Sprite) -> Result<Self> {
        if source.pose == target.pose {
            return Err(Error::Config(format!(
                "source and target poses are both {}",
                source.pose
            )));
        }
        if source.character_id != target.character_id || source.frame_index != target.frame_index {
            return Err(Error::Invalid(format!(
                "pair mixes {}#{} with {}#{}",
                source.character_id, source.frame_index, target.character_id, target.frame_index
            )));
        }
        Ok(Self {
            character_id: source.character_id.clone(),
            frame_index: source.frame_index,
            source,
            target,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(pose: Pose, id: &str, frame: usize) -> Sprite {
        Sprite::new(Tensor::full(SPRITE_SHAPE, -1.0), pose, id, frame).unwrap()
    }

    #[test]
    fn sprite_invariants() {
        assert!(Sprite::new(Tensor::full(Shape::new(3, 64, 64), 0.0), Pose::Front, "a", 0).is_err());
        assert!(Sprite::new(Tensor::full(SPRITE_SHAPE, 1.5), Pose::Front, "a", 0).is_err());
    }

    #[test]
    fn pair_invariants() {
        assert!(PairedExample::new(blank(Pose::Front, "a", 0), blank(Pose::Front, "a", 0)).is_err());
        assert!(PairedExample::new(blank(Pose::Front, "a", 0), blank(Pose::Right, "b", 0)).is_err());
        assert!(PairedExample::new(blank(Pose::Front, "a", 0), blank(Pose::Right, "a", 1)).is_err());
        let p = PairedExample::new(blank(Pose::Front, "a", 2), blank(Pose::Right, "a", 2)).unwrap();
        assert_eq!((p.character_id.as_str(), p.frame_index), ("a", 2));
    }

    #[test]
    fn record_keeps_frames_ordered() {
        let mut r = CharacterRecord::new("a");
        r.insert(blank(Pose::Front, "a", 2)).unwrap();
        r.insert(blank(Pose::Front, "a", 0)).unwrap();
        assert!(r.insert(blank(Pose::Front, "a", 0)).is_err());
        assert!(r.insert(blank(Pose::Front, "b", 1)).is_err());
        let idx: Vec<_> = r.frames(Pose::Front).iter().map(|s| s.frame_index).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn rgb_view_composites_over_white() {
        let mut t = Tensor::full(SPRITE_SHAPE, -1.0);
        for c in 0..4 {
            t.set(c, 0, 0, 0.5);
        }
        t.set(3, 0, 0, 1.0);
        let rgb = to_channels(&t, 3).unwrap();
        assert_eq!(rgb.shape(), Shape::new(3, 64, 64));
        assert_eq!(rgb.get(1, 0, 0), 0.5);
        assert_eq!(rgb.get(1, 5, 5), 1.0);
        assert_eq!(to_channels(&t, 4).unwrap(), t);
        assert!(to_channels(&t, 2).is_err());
    }

    #[test]
    fn pose_parsing() {
        assert_eq!("Right".parse::<Pose>().unwrap(), Pose::Right);
        assert!("up".parse::<Pose>().is_err());
    }
}
