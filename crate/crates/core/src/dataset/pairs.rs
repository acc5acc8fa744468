use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CharacterRecord, PairedExample, Pose};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairReport {
    pub pairs: Vec<PairedExample>,
    /// Characters left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Pairs every frame of `source` with the same frame of `target`, per
/// character. Characters lacking either pose, or with mismatched frame
/// counts, are skipped and reported rather than failing the whole set.
pub fn build_pairs(records: &[CharacterRecord], source: Pose, target: Pose) -> Result<PairReport> {
    if source == target {
        return Err(Error::Config(format!("source and target poses are both {source}")));
    }
    let mut report = PairReport::default();
    for record in records {
        let (src, tgt) = (record.frames(source), record.frames(target));
        let reason = if src.is_empty() || tgt.is_empty() {
            let missing = if src.is_empty() { source } else { target };
            Some(format!("no {missing} sprites"))
        } else if src.len() != tgt.len() {
            Some(format!("{} {source} frames vs {} {target} frames", src.len(), tgt.len()))
        } else {
            None
        };
        if let Some(reason) = reason {
            log::warn!("skipping character {}: {reason}", record.character_id);
            report.skipped.push((record.character_id.clone(), reason));
            continue;
        }
        for (s, t) in src.iter().zip(tgt) {
            if s.frame_index != t.frame_index {
                return Err(Error::Invalid(format!(
                    "{}: {source} frame {} lines up with {target} frame {}",
                    record.character_id, s.frame_index, t.frame_index
                )));
            }
            report.pairs.push(PairedExample::new(s.clone(), t.clone())?);
        }
    }
    Ok(report)
}

/// Unit of assignment when splitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitGranularity {
    /// Every frame of a character lands on the same side.
    #[default]
    Character,
    /// Frames are assigned independently.
    Frame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PairedExample>,
    pub test: Vec<PairedExample>,
    pub seed: u64,
    pub ratio: f64,
    pub granularity: SplitGranularity,
}

/// Training-set size for `n` examples: the test share is `(1 - ratio) * n`
/// rounded down, training gets the rest.
pub fn train_count(n: usize, ratio: f64) -> usize {
    // The epsilon absorbs representation error, e.g. (1 - 0.85) * 100 = 15.000000000000002.
    let test = ((1.0 - ratio) * n as f64 + 1e-9).floor() as usize;
    n - test.min(n)
}

/// Seeded shuffle-and-cut of `pairs` into train and test.
///
/// At character granularity the cut falls on a character boundary, so the
/// training size is the achievable count closest to [`train_count`] (exact
/// whenever every character contributes one pair).
pub fn split(
    mut pairs: Vec<PairedExample>,
    ratio: f64,
    seed: u64,
    granularity: SplitGranularity,
) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must lie strictly between 0 and 1")));
    }
    if pairs.len() < 2 {
        return Err(Error::Invalid(format!(
            "cannot split {} example(s); need at least 2",
            pairs.len()
        )));
    }
    pairs.sort_by(|a, b| (&a.character_id, a.frame_index).cmp(&(&b.character_id, b.frame_index)));
    let target = train_count(pairs.len(), ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test) = match granularity {
        SplitGranularity::Frame => {
            pairs.shuffle(&mut rng);
            let test = pairs.split_off(target);
            (pairs, test)
        }
        SplitGranularity::Character => {
            let mut groups: BTreeMap<String, Vec<PairedExample>> = BTreeMap::new();
            for p in pairs {
                groups.entry(p.character_id.clone()).or_default().push(p);
            }
            let mut groups: Vec<Vec<PairedExample>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            // Pick the prefix whose size is closest to the target; ties go to the larger.
            let mut best = (usize::MAX, 0);
            let mut acc = 0usize;
            for k in 0..=groups.len() {
                let gap = acc.abs_diff(target);
                if gap <= best.0 {
                    best = (gap, k);
                }
                if let Some(g) = groups.get(k) {
                    acc += g.len();
                }
            }
            let test_groups = groups.split_off(best.1);
            (groups.concat(), test_groups.concat())
        }
    };
    Ok(DatasetSplit {
        train,
        test,
        seed,
        ratio,
        granularity,
    })
}
