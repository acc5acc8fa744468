//! The three studies. Each persists `study.json` and its comparison grids
//! under `<runs root>/<experiment name>/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sprite_nn::Tensor;

use super::subrun::{run_subrun, save_png, translate_all, SubRun, SubRunKey, SubRunStatus};
use super::{config_hash, DataSource, DatasetRef, ExperimentSpec, StudyKind};
use crate::dataset::{
    build_pairs, generate_synthetic_dataset, load_canonical, load_descriptor, read_source, split, DatasetSplit,
    PartLibrary,
};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::render_grid;
use crate::training::TrainConfig;

pub const STUDY_FILE: &str = "study.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStudy {
    pub dataset: String,
    pub runs: Vec<SubRunStatus>,
    /// Relative to the study directory.
    pub grid: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaStudy {
    pub dataset: String,
    pub rgba: SubRunStatus,
    pub rgb: SubRunStatus,
    pub grid: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum StudyOutcome {
    Dataset { rows: Vec<SubRunStatus> },
    Patch(PatchStudy),
    Alpha(AlphaStudy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub name: String,
    pub spec_hash: String,
    pub outcome: StudyOutcome,
}

fn load_split(spec: &ExperimentSpec, data: &DatasetRef) -> Result<DatasetSplit> {
    let records = match &data.source {
        DataSource::Synthetic { characters, seed } => {
            generate_synthetic_dataset(*seed, *characters, &PartLibrary::default())?
        }
        DataSource::Prepared { path } => load_canonical(path)?,
        DataSource::Descriptor { path } => {
            let descriptor = load_descriptor(path)?;
            read_source(&descriptor, path.parent().unwrap_or(Path::new(".")))?
        }
    };
    let pairs = build_pairs(&records, spec.source_pose, spec.target_pose)?.pairs;
    split(pairs, spec.split.ratio, spec.split.seed, spec.split.granularity)
}

fn key(spec: &ExperimentSpec, data: &DatasetRef, train: TrainConfig) -> SubRunKey {
    SubRunKey {
        data: data.source.clone(),
        source_pose: spec.source_pose,
        target_pose: spec.target_pose,
        split: spec.split.clone(),
        train,
        evaluation: spec.evaluation.clone(),
    }
}

fn attempt(runs_root: &Path, data: &DatasetRef, key: &SubRunKey, split: &DatasetSplit) -> (SubRunStatus, Option<SubRun>) {
    match run_subrun(runs_root, &data.name, key, split) {
        Ok(run) => (SubRunStatus::Completed(run.result.clone()), Some(run)),
        Err(e) => {
            log::error!("{}: {e}", key.run_id(&data.name));
            (
                SubRunStatus::Failed {
                    run_id: key.run_id(&data.name),
                    error: e.to_string(),
                },
                None,
            )
        }
    }
}

fn study_dir(runs_root: &Path, spec: &ExperimentSpec) -> Result<PathBuf> {
    let dir = runs_root.join(&spec.name);
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    Ok(dir)
}

fn persist(runs_root: &Path, spec: &ExperimentSpec, outcome: StudyOutcome) -> Result<StudyResult> {
    let result = StudyResult {
        name: spec.name.clone(),
        spec_hash: config_hash(spec),
        outcome,
    };
    let path = study_dir(runs_root, spec)?.join(STUDY_FILE);
    let tmp = path.with_extension("json.partial");
    let text = serde_json::to_string_pretty(&result).expect("results serialize");
    fs::write(&tmp, text + "\n").map_err(Error::io(&tmp))?;
    fs::rename(&tmp, &path).map_err(Error::io(&path))?;
    Ok(result)
}

/// Side-by-side grid: source, target, then one column per model, over the
/// first test pairs of the split.
fn comparison_grid(
    runs_root: &Path,
    spec: &ExperimentSpec,
    split: &DatasetSplit,
    models: &[(String, &SubRun)],
    file: &str,
) -> Result<Option<PathBuf>> {
    if models.is_empty() || split.test.is_empty() {
        return Ok(None);
    }
    let pairs = &split.test[..split.test.len().min(spec.evaluation.grid_rows)];
    let outputs: Vec<Vec<Tensor>> = models
        .iter()
        .map(|(_, run)| translate_all(&run.generator, pairs))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<&Tensor>> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![p.source.pixels(), p.target.pixels()];
            row.extend(outputs.iter().map(|o| &o[i]));
            row
        })
        .collect();
    let mut labels = vec!["source", "target"];
    labels.extend(models.iter().map(|(l, _)| l.as_str()));
    let rel = PathBuf::from("figures").join(file);
    save_png(
        &render_grid(&rows, &labels, spec.evaluation.grid_scale)?,
        &study_dir(runs_root, spec)?.join(&rel),
    )?;
    Ok(Some(rel))
}

fn skipped(data: &DatasetRef, e: &Error) -> SubRunStatus {
    SubRunStatus::Skipped {
        dataset: data.name.clone(),
        reason: e.to_string(),
    }
}

fn require(spec: &ExperimentSpec, kind: StudyKind) -> Result<()> {
    spec.validate()?;
    if spec.study != kind {
        return Err(Error::Config(format!(
            "experiment {} is a {:?} study, not {kind:?}",
            spec.name, spec.study
        )));
    }
    Ok(())
}

/// One model per dataset with the spec's configuration. Datasets that cannot
/// be found are marked skipped; the rest still run.
pub fn run_dataset_study(spec: &ExperimentSpec, runs_root: &Path) -> Result<StudyResult> {
    require(spec, StudyKind::Dataset)?;
    let mut rows = Vec::new();
    for data in &spec.datasets {
        let split = match load_split(spec, data) {
            Ok(s) => s,
            Err(e) => {
                if e.kind() == ErrorKind::Missing {
                    log::warn!("{}: skipped: {e}", data.name);
                } else {
                    log::error!("{}: {e}", data.name);
                }
                rows.push(skipped(data, &e));
                continue;
            }
        };
        rows.push(attempt(runs_root, data, &key(spec, data, spec.train.clone()), &split).0);
    }
    persist(runs_root, spec, StudyOutcome::Dataset { rows })
}

/// One model per patch size, sharing data, split, and seed.
pub fn run_patch_study(spec: &ExperimentSpec, runs_root: &Path) -> Result<StudyResult> {
    require(spec, StudyKind::Patch)?;
    let data = &spec.datasets[0];
    let split = load_split(spec, data)?;
    let mut runs = Vec::new();
    let mut done = Vec::new();
    for &patch_size in &spec.patch_sizes {
        let train = TrainConfig {
            patch_size,
            ..spec.train.clone()
        };
        let (status, run) = attempt(runs_root, data, &key(spec, data, train), &split);
        runs.push(status);
        if let Some(run) = run {
            done.push((format!("{patch_size}x{patch_size}"), run));
        }
    }
    let models: Vec<(String, &SubRun)> = done.iter().map(|(l, r)| (l.clone(), r)).collect();
    let grid = comparison_grid(runs_root, spec, &split, &models, "patch-sizes.png")?;
    persist(
        runs_root,
        spec,
        StudyOutcome::Patch(PatchStudy {
            dataset: data.name.clone(),
            runs,
            grid,
        }),
    )
}

/// The same model trained on RGBA sprites and on their RGB composites.
/// Both are scored after compositing, so channel count does not sway FID.
pub fn run_alpha_ablation(spec: &ExperimentSpec, runs_root: &Path) -> Result<StudyResult> {
    require(spec, StudyKind::Alpha)?;
    let data = &spec.datasets[0];
    let split = load_split(spec, data)?;
    let mut statuses = Vec::new();
    let mut done = Vec::new();
    for channels in [4, 3] {
        let train = TrainConfig {
            channels,
            ..spec.train.clone()
        };
        let (status, run) = attempt(runs_root, data, &key(spec, data, train), &split);
        statuses.push(status);
        if let Some(run) = run {
            done.push((if channels == 4 { "rgba" } else { "rgb" }.to_string(), run));
        }
    }
    let models: Vec<(String, &SubRun)> = done.iter().map(|(l, r)| (l.clone(), r)).collect();
    let grid = comparison_grid(runs_root, spec, &split, &models, "alpha-ablation.png")?;
    let rgb = statuses.pop().expect("two runs");
    let rgba = statuses.pop().expect("two runs");
    persist(
        runs_root,
        spec,
        StudyOutcome::Alpha(AlphaStudy {
            dataset: data.name.clone(),
            rgba,
            rgb,
            grid,
        }),
    )
}

pub fn run_study(spec: &ExperimentSpec, runs_root: &Path) -> Result<StudyResult> {
    match spec.study {
        StudyKind::Dataset => run_dataset_study(spec, runs_root),
        StudyKind::Patch => run_patch_study(spec, runs_root),
        StudyKind::Alpha => run_alpha_ablation(spec, runs_root),
    }
}
