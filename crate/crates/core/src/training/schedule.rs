use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visits every index once per epoch, in a fresh seeded order each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSchedule {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl EpochSchedule {
    pub fn new(len: usize, seed: u64) -> Self {
        Self {
            order: (0..len).collect(),
            // Start exhausted so the first draw shuffles.
            cursor: len,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next(&mut self) -> usize {
        assert!(!self.order.is_empty(), "schedule over an empty set");
        if self.cursor == self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    pub(crate) fn to_saved(&self) -> SavedSchedule {
        SavedSchedule {
            order: self.order.clone(),
            cursor: self.cursor,
            epoch: self.epoch,
            rng: SavedRng::capture(&self.rng),
        }
    }

    pub(crate) fn from_saved(s: SavedSchedule) -> Result<Self> {
        let mut sorted = s.order.clone();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(i, &v)| i != v) || s.cursor > s.order.len() {
            return Err(Error::Invalid("corrupt schedule state".into()));
        }
        Ok(Self {
            order: s.order,
            cursor: s.cursor,
            epoch: s.epoch,
            rng: s.rng.restore(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct SavedSchedule {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    rng: SavedRng,
}

/// Exact position of a ChaCha stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct SavedRng {
    seed: [u8; 32],
    stream: u64,
    /// u128 as a decimal string; JSON numbers cannot hold it portably.
    word_pos: String,
}

impl SavedRng {
    pub(crate) fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub(crate) fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().unwrap_or(0));
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn every_epoch_is_a_permutation() {
        let mut s = EpochSchedule::new(7, 3);
        let mut epochs = Vec::new();
        for _ in 0..4 {
            let mut e: Vec<usize> = (0..7).map(|_| s.next()).collect();
            epochs.push(e.clone());
            e.sort();
            assert_eq!(e, (0..7).collect::<Vec<_>>());
        }
        assert_eq!(s.epoch(), 4);
        assert!(epochs.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn saved_state_resumes_identically() {
        let mut a = EpochSchedule::new(5, 9);
        for _ in 0..8 {
            a.next();
        }
        let mut b = EpochSchedule::from_saved(a.to_saved()).unwrap();
        assert_eq!(a, b);
        for _ in 0..20 {
            assert_eq!(a.next(), b.next());
        }
    }

    #[test]
    fn rng_capture_round_trips() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        r.set_stream(3);
        for _ in 0..13 {
            r.next_u32();
        }
        let mut back = SavedRng::capture(&r).restore();
        assert_eq!(back.next_u64(), r.next_u64());
    }
}
