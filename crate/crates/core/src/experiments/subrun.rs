//! One trained-and-evaluated model, addressed by the hash of its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sprite_nn::Tensor;

use super::{config_hash, DataSource, EvalOptions, SplitOptions};
use crate::dataset::{to_channels, DatasetSplit, PairedExample, Pose};
use crate::error::{Error, Result};
use crate::evaluation::{
    dangling_pixel_rate, fid_between, render_grid, sprite_distance, write_report, FeatureExtractor, FidReport,
    MatchMetric, RandomConvExtractor,
};
use crate::model::Generator;
use crate::training::{epochs_equivalent, load_checkpoint, load_generator, train, RunDir, TrainConfig, TrainState};

pub const RESULT_FILE: &str = "result.json";
const KEY_FILE: &str = "experiment.json";

/// Everything that determines a sub-run's outcome. Its hash names the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubRunKey {
    pub data: DataSource,
    pub source_pose: Pose,
    pub target_pose: Pose,
    pub split: SplitOptions,
    pub train: TrainConfig,
    pub evaluation: EvalOptions,
}

impl SubRunKey {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// `<dataset>-p<patch>-c<channels>-<hash prefix>`.
    pub fn run_id(&self, dataset: &str) -> String {
        format!(
            "{dataset}-p{}-c{}-{}",
            self.train.patch_size,
            self.train.channels,
            &self.hash()[..12]
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubRunResult {
    pub run_id: String,
    pub config_hash: String,
    pub dataset: String,
    pub patch_size: usize,
    pub channels: usize,
    pub steps: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: f64,
    pub fid: FidReport,
    /// Test FID of the generator before training.
    pub untrained_fid_test: Option<f64>,
    /// Mean fraction of test pixels drawn outside the true silhouette.
    pub dangling_rate: f64,
    /// Relative to the run directory.
    pub grid: PathBuf,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubRunStatus {
    Completed(SubRunResult),
    Failed { run_id: String, error: String },
    Skipped { dataset: String, reason: String },
}

/// A finished sub-run with its trained generator.
pub struct SubRun {
    pub result: SubRunResult,
    pub generator: Generator,
    pub dir: PathBuf,
}

/// Inference-mode outputs for every pair, in the generator's channel view.
pub fn translate_all(generator: &Generator, pairs: &[PairedExample]) -> Result<Vec<Tensor>> {
    let c = generator.image_shape().c;
    pairs
        .iter()
        .map(|p| generator.generate(&to_channels(p.source.pixels(), c)?))
        .collect()
}

fn truths(pairs: &[PairedExample], channels: usize) -> Result<Vec<Tensor>> {
    pairs.iter().map(|p| to_channels(p.target.pixels(), channels)).collect()
}

fn refs(v: &[Tensor]) -> Vec<&Tensor> {
    v.iter().collect()
}

fn read_result(path: &Path) -> Result<SubRunResult> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.partial");
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    fs::write(&tmp, text + "\n").map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

/// Trains (or resumes, or reuses) the model described by `key` on `split`,
/// then scores it.
pub fn run_subrun(runs_root: &Path, dataset: &str, key: &SubRunKey, split: &DatasetSplit) -> Result<SubRun> {
    if split.train.len() < 2 || split.test.len() < 2 {
        return Err(Error::Invalid(format!(
            "{dataset}: FID needs at least 2 examples per split, got {} train and {} test",
            split.train.len(),
            split.test.len()
        )));
    }
    let hash = key.hash();
    let run = RunDir::new(runs_root, &key.run_id(dataset))?;
    let steps = key.train.steps;
    let result_path = run.root.join(RESULT_FILE);
    if result_path.is_file() {
        let result = read_result(&result_path)?;
        if result.config_hash == hash {
            log::info!("{}: already complete, reusing", result.run_id);
            let (generator, _) = load_generator(&run.checkpoint_dir(steps))?;
            return Ok(SubRun {
                result,
                generator,
                dir: run.root,
            });
        }
    }
    fs::create_dir_all(&run.root).map_err(Error::io(&run.root))?;
    write_json_atomic(&run.root.join(KEY_FILE), key)?;

    let fresh = TrainState::new(key.train.clone(), split.train.len())?;
    let untrained = key.evaluation.baseline.then(|| fresh.generator.clone());
    let mut state = match run.latest_checkpoint() {
        Ok((step, dir)) => {
            let state = load_checkpoint(&dir)?;
            if state.config != key.train {
                return Err(Error::Invalid(format!(
                    "{} holds a checkpoint with a different configuration",
                    run.root.display()
                )));
            }
            log::info!("{}: resuming from step {step}", run.root.display());
            state
        }
        Err(_) => fresh,
    };
    let summary = train(&mut state, &split.train, Some(&run))?;
    let generator = state.generator;

    let extractor = RandomConvExtractor::new(key.evaluation.extractor_seed);
    let bg = key.evaluation.background;
    let c = key.train.channels;
    let gen_train = translate_all(&generator, &split.train)?;
    let gen_test = translate_all(&generator, &split.test)?;
    let truth_train = truths(&split.train, c)?;
    let truth_test = truths(&split.test, c)?;
    let fid_train = fid_between(&refs(&gen_train), &refs(&truth_train), &extractor, bg)?;
    let fid_test = fid_between(&refs(&gen_test), &refs(&truth_test), &extractor, bg)?;
    let report = FidReport {
        fid_train: fid_train.distance,
        fid_test: fid_test.distance,
        n_train: split.train.len(),
        n_test: split.test.len(),
        extractor_id: extractor.id(),
        extractor_hash: extractor.weights_hash(),
        preprocessing: crate::evaluation::FidPreprocessing {
            background: bg,
            resize: "nearest".into(),
            size: extractor.input_size(),
        },
        jittered: fid_train.jittered || fid_test.jittered,
        step: Some(steps),
    };
    write_report(&run.eval_path(steps), &report)?;

    let untrained_fid_test = match &untrained {
        Some(g) => Some(fid_between(&refs(&translate_all(g, &split.test)?), &refs(&truth_test), &extractor, bg)?.distance),
        None => None,
    };

    let mut dangling = 0.0;
    for (g, p) in gen_test.iter().zip(&split.test) {
        dangling += dangling_pixel_rate(g, p.target.alpha(), bg)?;
    }
    let dangling_rate = dangling / split.test.len() as f64;

    // Best reconstructions first.
    let mut order: Vec<(f64, usize)> = gen_test
        .iter()
        .zip(&truth_test)
        .enumerate()
        .map(|(i, (g, t))| Ok((sprite_distance(g, t, MatchMetric::L1)?, i)))
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let rows: Vec<Vec<&Tensor>> = order
        .iter()
        .take(key.evaluation.grid_rows)
        .map(|&(_, i)| vec![split.test[i].source.pixels(), split.test[i].target.pixels(), &gen_test[i]])
        .collect();
    let grid = PathBuf::from("figures/test-grid.png");
    save_png(
        &render_grid(&rows, &["source", "target", "generated"], key.evaluation.grid_scale)?,
        &run.root.join(&grid),
    )?;

    let result = SubRunResult {
        run_id: key.run_id(dataset),
        config_hash: hash,
        dataset: dataset.to_string(),
        patch_size: key.train.patch_size,
        channels: c,
        steps,
        train_size: split.train.len(),
        test_size: split.test.len(),
        epochs: epochs_equivalent(steps, split.train.len())?,
        fid: report,
        untrained_fid_test,
        dangling_rate,
        grid,
        train_seconds: summary.wall_seconds,
    };
    write_json_atomic(&result_path, &result)?;
    log::info!(
        "{}: fid train {:.4} test {:.4} (untrained test {:?})",
        result.run_id,
        result.fid.fid_train,
        result.fid.fid_test,
        result.untrained_fid_test
    );
    Ok(SubRun {
        result,
        generator,
        dir: run.root,
    })
}

pub(crate) fn save_png(img: &image::RgbaImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
