use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sprite_gan::dataset::{
    build_pairs, denormalize, generate_synthetic_dataset, load_canonical, normalize, pad_to_canvas, prepare_dataset,
    read_manifest, split, to_channels, write_canonical, DatasetSplit, PartLibrary, Pose, SplitGranularity, CANVAS,
};
use sprite_gan::evaluation::{evaluate_model, evaluate_with, render_grid, write_report, RandomConvExtractor, WHITE};
use sprite_gan::experiments::{emit_report, load_spec, run_study, write_study_report};
use sprite_gan::losses::LossConfig;
use sprite_gan::training::{load_checkpoint, load_generator, runs_root, train as run_training, RunDir, TrainConfig, TrainState};
use sprite_gan::{Error, Result};

use crate::{EvaluateArgs, PrepareArgs, StudyArgs, SynthArgs, TrainArgs, TranslateArgs};

/// Data provenance saved with every run so evaluation can rebuild its split.
#[derive(Debug, Serialize, Deserialize)]
struct RunData {
    data: PathBuf,
    source_pose: Pose,
    target_pose: Pose,
    split_ratio: f64,
    split_seed: u64,
    split_granularity: SplitGranularity,
}

const RUN_DATA_FILE: &str = "run.json";

impl RunData {
    fn split(&self) -> Result<DatasetSplit> {
        let records = load_canonical(&self.data)?;
        let pairs = build_pairs(&records, self.source_pose, self.target_pose)?.pairs;
        split(pairs, self.split_ratio, self.split_seed, self.split_granularity)
    }
}

fn root(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(runs_root)
}

fn print_dataset_summary(dir: &Path) -> Result<()> {
    let rows = read_manifest(dir)?;
    let mut per_pose: BTreeMap<Pose, usize> = BTreeMap::new();
    let mut per_char: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *per_pose.entry(r.pose).or_default() += 1;
        *per_char.entry(&r.character_id).or_default() += 1;
    }
    println!("{} sprites, {} characters in {}", rows.len(), per_char.len(), dir.display());
    for (pose, n) in &per_pose {
        println!("  {pose:<6} {n}");
    }
    for (c, n) in &per_char {
        println!("  {c}: {n}");
    }
    Ok(())
}

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let summary = prepare_dataset(&a.descriptor, &a.out)?;
    log::info!("wrote {}", summary.manifest.display());
    print_dataset_summary(&a.out)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let records = generate_synthetic_dataset(a.seed, a.characters, &PartLibrary::default())?;
    let summary = write_canonical(&records, &a.out, &format!("synthetic(seed={})", a.seed))?;
    println!(
        "{} sprites, {} characters in {}",
        summary.sprites,
        summary.characters,
        a.out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let run = RunDir::new(&root(a.runs_dir), &a.run_id)?;
    let data = RunData {
        data: fs::canonicalize(&a.data).map_err(|_| Error::Missing(a.data.clone()))?,
        source_pose: a.source_pose,
        target_pose: a.target_pose,
        split_ratio: a.split.split_ratio,
        split_seed: a.split.split_seed.unwrap_or(a.seed),
        split_granularity: a.split.split_granularity.into(),
    };
    let config = TrainConfig {
        steps: a.steps,
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        batch_size: a.batch_size,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
        loss: LossConfig {
            lambda_l1: a.lambda_l1,
            ..LossConfig::default()
        },
        channels: a.channels,
        patch_size: a.patch_size,
        ..TrainConfig::default()
    };
    config.validate()?;
    let split = data.split()?;
    log::info!(
        "{} train / {} test pairs ({} -> {})",
        split.train.len(),
        split.test.len(),
        data.source_pose,
        data.target_pose
    );

    let existing = run.checkpoints().unwrap_or_default();
    let mut state = if a.resume {
        let (step, dir) = run.latest_checkpoint()?;
        let mut state = load_checkpoint(&dir)?;
        if state.config.steps != config.steps {
            log::info!("extending run from {} to {} steps", state.config.steps, config.steps);
            state.config.steps = config.steps;
        }
        if state.config != config {
            return Err(Error::Config(format!(
                "run {} was trained with different hyperparameters; resume with the original flags",
                a.run_id
            )));
        }
        log::info!("resuming from step {step}");
        state
    } else {
        if !existing.is_empty() {
            return Err(Error::Config(format!(
                "run {} already has checkpoints; pass --resume or choose another --run-id",
                a.run_id
            )));
        }
        TrainState::new(config, split.train.len())?
    };
    fs::create_dir_all(&run.root).map_err(|source| Error::Io {
        path: run.root.clone(),
        source,
    })?;
    let text = serde_json::to_string_pretty(&data).expect("run data serializes");
    let path = run.root.join(RUN_DATA_FILE);
    fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })?;

    let summary = run_training(&mut state, &split.train, Some(&run))?;
    println!(
        "trained {} steps in {:.1}s ({:.2} steps/s); checkpoint {}",
        summary.steps_run,
        summary.wall_seconds,
        summary.steps_per_sec,
        summary
            .final_checkpoint
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "none".into())
    );
    Ok(())
}

fn read_run_data(run: &RunDir) -> Result<RunData> {
    let path = run.root.join(RUN_DATA_FILE);
    if !path.is_file() {
        return Err(Error::Missing(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let run = RunDir::new(&root(a.runs_dir), &a.run_id)?;
    let (step, ckpt) = match a.step {
        Some(s) => (s, run.checkpoint_dir(s)),
        None => run.latest_checkpoint()?,
    };
    let (generator, config) = load_generator(&ckpt)?;
    let split = read_run_data(&run)?.split()?;
    let extractor = RandomConvExtractor::new(a.seed);
    let mut report = if a.oracle {
        evaluate_with(&split, &extractor, WHITE, config.channels, |p| {
            to_channels(p.target.pixels(), config.channels)
        })?
    } else {
        evaluate_model(&generator, &split, &extractor, WHITE)?
    };
    report.step = Some(step);
    let path = if a.oracle {
        run.root.join(format!("eval-{step}-oracle.json"))
    } else {
        run.eval_path(step)
    };
    write_report(&path, &report)?;

    let pairs = &split.test[..split.test.len().min(a.grid_rows)];
    let outputs = pairs
        .iter()
        .map(|p| generator.generate(&to_channels(p.source.pixels(), config.channels)?))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<_>> = pairs
        .iter()
        .zip(&outputs)
        .map(|(p, g)| vec![p.source.pixels(), p.target.pixels(), g])
        .collect();
    if !rows.is_empty() {
        let grid = run.root.join("figures").join(format!("eval-{step}.png"));
        fs::create_dir_all(grid.parent().expect("has parent")).map_err(|source| Error::Io {
            path: grid.clone(),
            source,
        })?;
        render_grid(&rows, &["source", "target", "generated"], 2)?
            .save(&grid)
            .map_err(|source| Error::Image { path: grid, source })?;
    }

    println!("| split | n | FID |");
    println!("|---|---|---|");
    println!("| train | {} | {:.6} |", report.n_train, report.fid_train);
    println!("| test | {} | {:.6} |", report.n_test, report.fid_test);
    println!("extractor {} ({}); report {}", report.extractor_id, &report.extractor_hash[..12], path.display());
    Ok(())
}

fn load_input(path: &Path) -> Result<image::RgbaImage> {
    if !path.is_file() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let img = image::open(path)
        .map_err(|e| Error::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgba8();
    if img.dimensions() == (CANVAS, CANVAS) {
        return Ok(img);
    }
    let (w, h) = img.dimensions();
    log::warn!("{}: {w}x{h} input padded to {CANVAS}x{CANVAS}", path.display());
    pad_to_canvas(&img, CANVAS)
}

/// Each output keeps its input's file stem; inputs whose stems collide are
/// prefixed with their parent directory's name.
fn output_names(inputs: &[PathBuf]) -> Result<Vec<String>> {
    let stem = |p: &Path| -> Result<String> {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Invalid(format!("{} has no file name", p.display())))
    };
    let stems = inputs.iter().map(|p| stem(p)).collect::<Result<Vec<_>>>()?;
    Ok(inputs
        .iter()
        .zip(&stems)
        .map(|(p, s)| {
            let clash = stems.iter().filter(|t| *t == s).count() > 1;
            let parent = p.parent().and_then(|d| d.file_name()).map(|d| d.to_string_lossy().into_owned());
            match (clash, parent) {
                (true, Some(dir)) => format!("{dir}_{s}.png"),
                _ => format!("{s}.png"),
            }
        })
        .collect())
}

pub fn translate(a: TranslateArgs) -> Result<()> {
    let ckpt = match (a.ckpt, a.run_id) {
        (Some(dir), _) => dir,
        (None, Some(id)) => RunDir::new(&root(a.runs_dir), &id)?.latest_checkpoint()?.1,
        (None, None) => unreachable!("clap requires one of --ckpt and --run-id"),
    };
    let (generator, config) = load_generator(&ckpt)?;
    fs::create_dir_all(&a.out).map_err(|source| Error::Io {
        path: a.out.clone(),
        source,
    })?;
    let names = output_names(&a.input)?;
    for (input, name) in a.input.iter().zip(names) {
        let x = to_channels(&normalize(&load_input(input)?)?, config.channels)?;
        let y = denormalize(&generator.generate(&x)?)?;
        let out = a.out.join(name);
        y.save(&out).map_err(|source| Error::Image {
            path: out.clone(),
            source,
        })?;
        println!("{} -> {}", input.display(), out.display());
    }
    Ok(())
}

fn resolve_spec(name: &str) -> PathBuf {
    let p = PathBuf::from(name);
    if p.exists() || p.extension().is_some() || p.components().count() > 1 {
        p
    } else {
        Path::new("experiments").join(format!("{name}.toml"))
    }
}

pub fn study(a: StudyArgs) -> Result<()> {
    let mut spec = load_spec(&resolve_spec(&a.spec))?;
    if let Some(seed) = a.seed {
        spec.train.seed = seed;
        spec.split.seed = seed;
    }
    if let Some(steps) = a.steps {
        spec.train.steps = steps;
    }
    spec.validate()?;
    let root = root(a.runs_dir);
    let result = run_study(&spec, &root)?;
    let path = write_study_report(&root, &result)?;
    print!("{}", emit_report(std::slice::from_ref(&result)));
    println!("report written to {}", path.display());
    Ok(())
}
