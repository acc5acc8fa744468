//! Alternating adversarial optimization with checkpointing and metric logs.

mod checkpoint;
mod metrics;
mod schedule;

use std::path::PathBuf;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sprite_nn::{Adam, AdamConfig, Backprop, Parameters, Tensor};

pub use checkpoint::{load_checkpoint, load_discriminator, load_generator, runs_root, save_checkpoint, RunDir, RUNS_DIR_ENV};
pub use metrics::{read_metrics, MetricRow, METRICS_HEADER};
pub use schedule::EpochSchedule;

use crate::dataset::{to_channels, PairedExample};
use crate::error::{Error, Result};
use crate::losses::{discriminator_loss_with_grads, generator_loss_with_grads, LossConfig};
use crate::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Mode, SHIPPED_PATCH_SIZES};

/// Independent sub-seed for one consumer (`stream`) of a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const GENERATOR_STREAM: u64 = 1;
const DISCRIMINATOR_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub loss: LossConfig,
    /// 4 for RGBA sprites, 3 for the RGB ablation.
    pub channels: usize,
    pub patch_size: usize,
    /// Generator architecture override; the default U-Net when absent.
    pub generator: Option<GeneratorConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 40_000,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1,
            seed: 0,
            checkpoint_every: 4_000,
            loss: LossConfig::default(),
            channels: 4,
            patch_size: 2,
            generator: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be positive, got {}", self.adam_eps)));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if self.channels != 3 && self.channels != 4 {
            return Err(Error::Config(format!("channels must be 3 or 4, got {}", self.channels)));
        }
        if !SHIPPED_PATCH_SIZES.contains(&self.patch_size) {
            return Err(Error::Config(format!(
                "patch size {} has no validated discriminator; choose one of {SHIPPED_PATCH_SIZES:?}",
                self.patch_size
            )));
        }
        self.loss.validate()?;
        let g = self.generator_config();
        if g.channels != self.channels {
            return Err(Error::Config(format!(
                "generator override has {} channels but the run uses {}",
                g.channels, self.channels
            )));
        }
        g.validate()
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        self.generator.clone().unwrap_or_else(|| GeneratorConfig::with_channels(self.channels))
    }

    pub fn discriminator_config(&self) -> Result<DiscriminatorConfig> {
        let mut d = DiscriminatorConfig::for_patch_size(self.patch_size, self.channels)?;
        d.input_size = self.generator_config().input_size;
        Ok(d)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr as f32,
            beta1: self.beta1 as f32,
            beta2: self.beta2 as f32,
            eps: self.adam_eps as f32,
        }
    }
}

/// How many passes over the training set `steps` single-example steps make.
pub fn epochs_equivalent(steps: u64, train_size: usize) -> Result<f64> {
    if train_size == 0 {
        return Err(Error::Invalid("training set is empty".into()));
    }
    Ok(steps as f64 / train_size as f64)
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub step: u64,
    pub generator: Generator,
    pub discriminator: Discriminator,
    g_opt: Adam,
    d_opt: Adam,
    dropout_rng: ChaCha8Rng,
    schedule: EpochSchedule,
    /// Rows logged since this state was created or restored.
    pub history: Vec<MetricRow>,
    pub last_checkpoint: Option<PathBuf>,
}

impl TrainState {
    /// Fresh networks and optimizers for a training set of `train_size` pairs.
    pub fn new(config: TrainConfig, train_size: usize) -> Result<Self> {
        config.validate()?;
        if train_size == 0 {
            return Err(Error::Invalid("training set is empty".into()));
        }
        let generator = Generator::build(config.generator_config(), derive_seed(config.seed, GENERATOR_STREAM))?;
        let discriminator =
            Discriminator::build(config.discriminator_config()?, derive_seed(config.seed, DISCRIMINATOR_STREAM))?;
        let g_opt = Adam::new(config.adam(), &generator.params());
        let d_opt = Adam::new(config.adam(), &discriminator.params());
        Ok(Self {
            dropout_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, DROPOUT_STREAM)),
            schedule: EpochSchedule::new(train_size, derive_seed(config.seed, SHUFFLE_STREAM)),
            config,
            step: 0,
            generator,
            discriminator,
            g_opt,
            d_opt,
            history: Vec::new(),
            last_checkpoint: None,
        })
    }

    pub fn schedule(&self) -> &EpochSchedule {
        &self.schedule
    }

    fn non_finite(&self) -> Error {
        Error::NonFiniteLoss {
            step: self.step + 1,
            checkpoint: self.last_checkpoint.clone(),
        }
    }

    /// One discriminator update on the real pairs and freshly generated
    /// fakes, then one generator update. Gradients average over the batch.
    pub fn train_step(&mut self, batch: &[&PairedExample]) -> Result<MetricRow> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let started = Instant::now();
        let inv_b = 1.0 / batch.len() as f32;
        let ch = self.config.channels;
        let loss_cfg = self.config.loss;
        let items = batch
            .iter()
            .map(|p| Ok((to_channels(p.source.pixels(), ch)?, to_channels(p.target.pixels(), ch)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut fakes = Vec::with_capacity(items.len());
        for (x, _) in &items {
            fakes.push(self.generator.forward(x, Mode::Train(&mut self.dropout_rng))?);
        }

        // The discriminator sees the fakes as constants: no path back into G.
        let mut d_loss = 0.0;
        for ((x, y), (y_hat, _)) in items.iter().zip(&fakes) {
            let (real, real_tape) = self.discriminator.forward(x, y)?;
            let (fake, fake_tape) = self.discriminator.forward(x, y_hat)?;
            let (loss, mut g_real, mut g_fake) =
                discriminator_loss_with_grads(&real, &fake, &loss_cfg).map_err(|_| self.non_finite())?;
            if !loss.is_finite() {
                return Err(self.non_finite());
            }
            d_loss += loss / batch.len() as f64;
            g_real.scale(inv_b);
            g_fake.scale(inv_b);
            self.discriminator.backward(&real_tape, &g_real, Backprop::PARAMS_ONLY)?;
            self.discriminator.backward(&fake_tape, &g_fake, Backprop::PARAMS_ONLY)?;
        }
        self.d_opt.step(self.discriminator.params_mut());

        let (mut g_total, mut g_adv, mut g_l1) = (0.0, 0.0, 0.0);
        for ((x, y), (y_hat, tape)) in items.iter().zip(&fakes) {
            let (fake, fake_tape) = self.discriminator.forward(x, y_hat)?;
            let (parts, grads) =
                generator_loss_with_grads(&fake, y, y_hat, &loss_cfg).map_err(|_| self.non_finite())?;
            if !parts.total.is_finite() {
                return Err(self.non_finite());
            }
            g_total += parts.total / batch.len() as f64;
            g_adv += parts.adversarial / batch.len() as f64;
            g_l1 += parts.l1 / batch.len() as f64;
            let mut d_grid = grads.d_grid;
            d_grid.scale(inv_b);
            let mut d_out: Tensor = self
                .discriminator
                .backward(&fake_tape, &d_grid, Backprop::INPUT_ONLY)?
                .expect("input gradient requested");
            let mut direct = grads.d_output;
            direct.scale(inv_b);
            d_out.add_assign(&direct)?;
            self.generator.backward(tape, &d_out)?;
        }
        self.g_opt.step(self.generator.params_mut());

        self.step += 1;
        let row = MetricRow {
            step: self.step,
            g_total,
            g_adv,
            g_l1,
            d_loss,
            steps_per_sec: 1.0 / started.elapsed().as_secs_f64().max(1e-9),
        };
        self.history.push(row.clone());
        Ok(row)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps_run: u64,
    pub wall_seconds: f64,
    pub steps_per_sec: f64,
    pub final_checkpoint: Option<PathBuf>,
}

/// Runs `state` up to `state.config.steps`, drawing examples from a
/// reshuffled-per-epoch cycle over `train`. With a run directory, metrics
/// stream to `metrics.csv` and checkpoints land at the configured cadence
/// and on completion.
pub fn train(state: &mut TrainState, train: &[PairedExample], run: Option<&RunDir>) -> Result<TrainSummary> {
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if train.len() != state.schedule.len() {
        return Err(Error::Invalid(format!(
            "state was built for {} training pairs, got {}",
            state.schedule.len(),
            train.len()
        )));
    }
    let mut log = match run {
        Some(run) => Some(run.open_metrics(state.step)?),
        None => None,
    };
    let started = Instant::now();
    let first = state.step;
    let total = state.config.steps;
    let every = state.config.checkpoint_every;
    let report_every = (total / 20).max(1);
    while state.step < total {
        let batch: Vec<&PairedExample> = (0..state.config.batch_size).map(|_| &train[state.schedule.next()]).collect();
        let result = state.train_step(&batch);
        let row = match result {
            Ok(row) => row,
            Err(e) => {
                if let Some(log) = log.as_mut() {
                    log.flush()?;
                }
                return Err(e);
            }
        };
        if let Some(log) = log.as_mut() {
            log.append(&row)?;
        }
        if state.step % report_every == 0 {
            log::info!(
                "step {}/{}: g_total {:.4} g_l1 {:.4} d_loss {:.4}",
                state.step,
                total,
                row.g_total,
                row.g_l1,
                row.d_loss
            );
        }
        if let Some(run) = run {
            if state.step % every == 0 || state.step == total {
                log.as_mut().expect("run has a log").flush()?;
                save_checkpoint(state, run)?;
            }
        }
    }
    if let Some(log) = log.as_mut() {
        log.flush()?;
    }
    let wall = started.elapsed().as_secs_f64();
    let steps_run = state.step - first;
    Ok(TrainSummary {
        steps_run,
        wall_seconds: wall,
        steps_per_sec: if wall > 0.0 { steps_run as f64 / wall } else { 0.0 },
        final_checkpoint: state.last_checkpoint.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_match_reference_table() {
        let got: Vec<i64> = [776, 184, 250, 347]
            .iter()
            .map(|&n| epochs_equivalent(40_000, n).unwrap().round() as i64)
            .collect();
        assert_eq!(got, vec![52, 217, 160, 115]);
        assert!((epochs_equivalent(40_000, 776).unwrap() - 51.546).abs() < 1e-3);
        assert!(epochs_equivalent(10, 0).is_err());
    }

    #[test]
    fn config_guards() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { steps: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { patch_size: 7, ..TrainConfig::default() },
            TrainConfig { channels: 2, ..TrainConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let s: Vec<u64> = (1..5).map(|k| derive_seed(42, k)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 4);
        assert_eq!(s[0], derive_seed(42, 1));
    }
}
