//! Run directories and checkpoints:
//!
//! ```text
//! <runs>/<run-id>/metrics.csv
//! <runs>/<run-id>/ckpt-<step>/{generator,discriminator}.bin      weights
//! <runs>/<run-id>/ckpt-<step>/{generator,discriminator}.adam.bin optimizer moments
//! <runs>/<run-id>/ckpt-<step>/{generator,discriminator}.json     network descriptions
//! <runs>/<run-id>/ckpt-<step>/config.json                        TrainConfig
//! <runs>/<run-id>/ckpt-<step>/state.json                         step, RNG and schedule positions
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sprite_nn::archive::{read_archive, write_archive};
use sprite_nn::{Adam, Parameters};

use super::metrics::MetricsLog;
use super::schedule::{EpochSchedule, SavedRng, SavedSchedule};
use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::model::{load_params, save_params, Discriminator, Generator};

/// Environment variable overriding where runs are stored.
pub const RUNS_DIR_ENV: &str = "SPRITE_RUNS_DIR";

/// `$SPRITE_RUNS_DIR`, or `runs` in the working directory.
pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(runs_root: &Path, run_id: &str) -> Result<Self> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(Error::Config(format!("invalid run id {run_id:?}")));
        }
        Ok(Self {
            root: runs_root.join(run_id),
        })
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoint_dir(&self, step: u64) -> PathBuf {
        self.root.join(format!("ckpt-{step}"))
    }

    pub fn eval_path(&self, step: u64) -> PathBuf {
        self.root.join(format!("eval-{step}.json"))
    }

    /// Completed checkpoints, oldest first.
    pub fn checkpoints(&self) -> Result<Vec<(u64, PathBuf)>> {
        if !self.root.is_dir() {
            return Err(Error::Missing(self.root.clone()));
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(Error::io(&self.root))? {
            let path = entry.map_err(Error::io(&self.root))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(step) = name.strip_prefix("ckpt-").and_then(|s| s.parse::<u64>().ok()) {
                if path.join("state.json").is_file() {
                    out.push((step, path));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn latest_checkpoint(&self) -> Result<(u64, PathBuf)> {
        self.checkpoints()?
            .pop()
            .ok_or_else(|| Error::Missing(self.root.join("ckpt-*")))
    }

    pub(crate) fn open_metrics(&self, step: u64) -> Result<MetricsLog> {
        fs::create_dir_all(&self.root).map_err(Error::io(&self.root))?;
        MetricsLog::open(&self.metrics_path(), step)
    }
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    step: u64,
    generator_adam_steps: u64,
    discriminator_adam_steps: u64,
    dropout_rng: SavedRng,
    schedule: SavedSchedule,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(Error::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
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

fn save_moments(path: &Path, net: &impl Parameters, opt: &Adam) -> Result<()> {
    let params = net.params();
    let names: Vec<(String, String)> = params
        .iter()
        .map(|p| (format!("m/{}", p.name), format!("v/{}", p.name)))
        .collect();
    let mut entries = Vec::with_capacity(2 * params.len());
    for (i, p) in params.iter().enumerate() {
        entries.push((names[i].0.as_str(), p.shape.as_slice(), opt.first_moments()[i].as_slice()));
        entries.push((names[i].1.as_str(), p.shape.as_slice(), opt.second_moments()[i].as_slice()));
    }
    write_archive(path, entries).map_err(Into::into)
}

fn load_moments(path: &Path, net: &impl Parameters, config: sprite_nn::AdamConfig, steps: u64) -> Result<Adam> {
    let stored = read_archive(path)?;
    let params = net.params();
    if stored.len() != 2 * params.len() {
        return Err(Error::Invalid(format!("{}: wrong number of moment tensors", path.display())));
    }
    let mut first = Vec::with_capacity(params.len());
    let mut second = Vec::with_capacity(params.len());
    for (p, pair) in params.iter().zip(stored.chunks_exact(2)) {
        let ok = pair[0].name == format!("m/{}", p.name)
            && pair[1].name == format!("v/{}", p.name)
            && pair[0].shape == p.shape
            && pair[1].shape == p.shape;
        if !ok {
            return Err(Error::Invalid(format!(
                "{}: moments for {} do not match the network",
                path.display(),
                p.name
            )));
        }
        first.push(pair[0].data.clone());
        second.push(pair[1].data.clone());
    }
    Ok(Adam::from_state(config, steps, first, second))
}

/// Writes a checkpoint for the current step. The directory appears only
/// once complete, so a failure leaves earlier checkpoints untouched.
pub fn save_checkpoint(state: &mut TrainState, run: &RunDir) -> Result<PathBuf> {
    let dir = run.checkpoint_dir(state.step);
    let tmp = run.root.join(format!(".ckpt-{}.partial", state.step));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(Error::io(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(Error::io(&tmp))?;
    save_params(&state.generator, &tmp.join("generator.bin"))?;
    save_params(&state.discriminator, &tmp.join("discriminator.bin"))?;
    save_moments(&tmp.join("generator.adam.bin"), &state.generator, &state.g_opt)?;
    save_moments(&tmp.join("discriminator.adam.bin"), &state.discriminator, &state.d_opt)?;
    write_json(&tmp.join("generator.json"), &state.generator.network_spec())?;
    write_json(&tmp.join("discriminator.json"), &state.discriminator.network_spec())?;
    write_json(&tmp.join("config.json"), &state.config)?;
    write_json(
        &tmp.join("state.json"),
        &StateFile {
            step: state.step,
            generator_adam_steps: state.g_opt.steps_taken(),
            discriminator_adam_steps: state.d_opt.steps_taken(),
            dropout_rng: SavedRng::capture(&state.dropout_rng),
            schedule: state.schedule.to_saved(),
        },
    )?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(Error::io(&dir))?;
    }
    fs::rename(&tmp, &dir).map_err(Error::io(&dir))?;
    state.last_checkpoint = Some(dir.clone());
    log::info!("checkpoint written to {}", dir.display());
    Ok(dir)
}

fn read_config(dir: &Path) -> Result<TrainConfig> {
    if !dir.is_dir() {
        return Err(Error::Missing(dir.to_path_buf()));
    }
    let config: TrainConfig = read_json(&dir.join("config.json"))?;
    config.validate()?;
    Ok(config)
}

/// Restores a full training state; the metric history starts empty.
pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let config = read_config(dir)?;
    let file: StateFile = read_json(&dir.join("state.json"))?;
    let schedule = EpochSchedule::from_saved(file.schedule)?;
    let mut state = TrainState::new(config, schedule.len())?;
    load_params(&mut state.generator, &dir.join("generator.bin"))?;
    load_params(&mut state.discriminator, &dir.join("discriminator.bin"))?;
    let adam = state.config.adam();
    state.g_opt = load_moments(&dir.join("generator.adam.bin"), &state.generator, adam, file.generator_adam_steps)?;
    state.d_opt = load_moments(
        &dir.join("discriminator.adam.bin"),
        &state.discriminator,
        adam,
        file.discriminator_adam_steps,
    )?;
    state.step = file.step;
    state.dropout_rng = file.dropout_rng.restore();
    state.schedule = schedule;
    state.last_checkpoint = Some(dir.to_path_buf());
    Ok(state)
}

/// Just the generator of a checkpoint, for inference.
pub fn load_generator(dir: &Path) -> Result<(Generator, TrainConfig)> {
    let config = read_config(dir)?;
    let mut g = Generator::build(config.generator_config(), 0)?;
    load_params(&mut g, &dir.join("generator.bin"))?;
    Ok((g, config))
}

/// Just the discriminator of a checkpoint.
pub fn load_discriminator(dir: &Path) -> Result<Discriminator> {
    let config = read_config(dir)?;
    let mut d = Discriminator::build(config.discriminator_config()?, 0)?;
    load_params(&mut d, &dir.join("discriminator.bin"))?;
    Ok(d)
}
