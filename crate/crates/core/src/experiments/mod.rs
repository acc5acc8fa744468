//! Declarative studies: per-dataset FID tables, the discriminator patch-size
//! comparison, and the RGBA-versus-RGB ablation.
//!
//! Every trained model is a *sub-run* stored under the runs root in a
//! directory named after a hash of everything that determines its result.
//! A sub-run whose `result.json` carries the same hash is reused, so studies
//! resume after interruption and share identical runs with each other.

mod report;
mod studies;
mod subrun;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Pose, SplitGranularity};
use crate::error::{Error, Result};
use crate::evaluation::WHITE;
use crate::model::SHIPPED_PATCH_SIZES;
use crate::training::TrainConfig;

pub use report::{emit_report, write_study_report, REPORT_FILE};
pub use studies::{
    run_alpha_ablation, run_dataset_study, run_patch_study, run_study, AlphaStudy, PatchStudy, StudyOutcome,
    StudyResult, STUDY_FILE,
};
pub use subrun::{run_subrun, translate_all, SubRun, SubRunKey, SubRunResult, SubRunStatus, RESULT_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Dataset,
    Patch,
    Alpha,
}

/// Where a study's sprites come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Procedurally assembled characters.
    Synthetic { characters: usize, seed: u64 },
    /// A canonical directory written by `prepare`.
    Prepared { path: PathBuf },
    /// A dataset descriptor, read directly from its source images.
    Descriptor { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub name: String,
    pub source: DataSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitOptions {
    pub ratio: f64,
    pub seed: u64,
    pub granularity: SplitGranularity,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            ratio: 0.85,
            seed: 0,
            granularity: SplitGranularity::Character,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Seed of the random convolutional feature extractor.
    pub extractor_seed: u64,
    /// Compositing background for FID and the dangling-pixel count.
    pub background: [u8; 3],
    /// Rows in each rendered comparison grid.
    pub grid_rows: usize,
    pub grid_scale: u32,
    /// Also score the untrained generator, as a reference point.
    pub baseline: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            extractor_seed: 0,
            background: WHITE,
            grid_rows: 8,
            grid_scale: 2,
            baseline: true,
        }
    }
}

fn default_source() -> Pose {
    Pose::Front
}

fn default_target() -> Pose {
    Pose::Right
}

fn default_patch_sizes() -> Vec<usize> {
    SHIPPED_PATCH_SIZES.to_vec()
}

/// One study, as written in an `experiments/*.toml` file.
///
/// The discriminator is selected by `train.patch_size` from the shipped
/// stacks; the generator by `train.generator` (default U-Net when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub study: StudyKind,
    #[serde(default)]
    pub datasets: Vec<DatasetRef>,
    #[serde(default = "default_source")]
    pub source_pose: Pose,
    #[serde(default = "default_target")]
    pub target_pose: Pose,
    #[serde(default)]
    pub split: SplitOptions,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluation: EvalOptions,
    /// Patch sizes compared by the patch study.
    #[serde(default = "default_patch_sizes")]
    pub patch_sizes: Vec<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::Config(format!(
                "experiment name {:?} must be non-empty and use only letters, digits, '-', '_' and '.'",
                self.name
            )));
        }
        if self.source_pose == self.target_pose {
            return Err(Error::Config(format!(
                "source and target pose are both {}",
                self.source_pose
            )));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!("split ratio {} must lie strictly between 0 and 1", self.split.ratio)));
        }
        self.train.validate()?;
        if self.evaluation.grid_rows == 0 || self.evaluation.grid_scale == 0 {
            return Err(Error::Config("grid_rows and grid_scale must be positive".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("dataset name {:?} is used twice", w[0])));
        }
        match self.study {
            StudyKind::Dataset => {}
            StudyKind::Patch | StudyKind::Alpha => {
                if self.datasets.len() != 1 {
                    return Err(Error::Config(format!(
                        "the {:?} study runs on exactly one dataset, {} given",
                        self.study,
                        self.datasets.len()
                    )));
                }
            }
        }
        if self.study == StudyKind::Patch {
            if self.patch_sizes.is_empty() {
                return Err(Error::Config("patch study needs at least one patch size".into()));
            }
            for &p in &self.patch_sizes {
                crate::model::DiscriminatorConfig::for_patch_size(p, self.train.channels)?;
            }
        }
        Ok(())
    }

    /// Resolves relative dataset paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for d in &mut self.datasets {
            match &mut d.source {
                DataSource::Prepared { path } | DataSource::Descriptor { path } if path.is_relative() => {
                    *path = base.join(&*path);
                }
                _ => {}
            }
        }
    }
}

pub fn parse_spec(text: &str, origin: &Path) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec =
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
    spec.resolve_paths(origin.parent().unwrap_or(Path::new(".")));
    spec.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    if !path.is_file() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_spec(&text, path)
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    hex::encode(Sha256::digest(json))
}
