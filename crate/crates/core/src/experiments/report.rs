//! Markdown summary of finished studies.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use super::studies::{StudyOutcome, StudyResult};
use super::subrun::SubRunStatus;
use crate::error::{Error, Result};

pub const REPORT_FILE: &str = "report.md";

/// Whole epochs print bare; anything else is marked approximate.
fn epochs(e: f64) -> String {
    if (e - e.round()).abs() < 1e-9 {
        format!("{e:.0}")
    } else {
        format!("≈{e:.0}")
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Paths in the report are relative to `<runs root>/<study>/`.
fn run_path(run_id: &str, file: &Path) -> String {
    PathBuf::from("..").join(run_id).join(file).display().to_string()
}

const RUN_HEADER: &str = "| dataset | patch | channels | train size | epochs | FID train | FID test | untrained FID test | dangling | run | config hash |\n\
                          |---|---|---|---|---|---|---|---|---|---|---|\n";

fn run_row(out: &mut String, status: &SubRunStatus, figures: &mut Vec<(String, String)>) {
    match status {
        SubRunStatus::Completed(r) => {
            let untrained = r.untrained_fid_test.map(|f| format!("{f:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.4} | {:.4} | {} | {:.4} | `{}` | `{}` |",
                r.dataset,
                r.patch_size,
                r.channels,
                r.train_size,
                epochs(r.epochs),
                r.fid.fid_train,
                r.fid.fid_test,
                untrained,
                r.dangling_rate,
                r.run_id,
                short(&r.config_hash)
            );
            figures.push((format!("{} test grid", r.run_id), run_path(&r.run_id, &r.grid)));
            if let Some(step) = r.fid.step {
                figures.push((
                    format!("{} FID report", r.run_id),
                    run_path(&r.run_id, Path::new(&format!("eval-{step}.json"))),
                ));
            }
        }
        SubRunStatus::Failed { run_id, error } => {
            let _ = writeln!(out, "| failed: {} | | | | | | | | | `{run_id}` | |", error.replace('|', "\\|").replace('\n', " "));
        }
        SubRunStatus::Skipped { dataset, reason } => {
            let _ = writeln!(
                out,
                "| {dataset} (skipped: {}) | | | | | | | | | | |",
                reason.replace('|', "\\|").replace('\n', " ")
            );
        }
    }
}

fn section(out: &mut String, study: &StudyResult) {
    let (kind, runs, grid): (&str, Vec<&SubRunStatus>, Option<&PathBuf>) = match &study.outcome {
        StudyOutcome::Dataset { rows } => ("dataset study", rows.iter().collect(), None),
        StudyOutcome::Patch(p) => ("patch-size study", p.runs.iter().collect(), p.grid.as_ref()),
        StudyOutcome::Alpha(a) => ("alpha ablation", vec![&a.rgba, &a.rgb], a.grid.as_ref()),
    };
    let _ = writeln!(out, "## {} ({kind})\n", study.name);
    let _ = writeln!(out, "Spec hash: `{}`\n", study.spec_hash);
    if runs.is_empty() {
        out.push_str("No datasets configured.\n\n");
        return;
    }
    out.push_str(RUN_HEADER);
    let mut figures = Vec::new();
    for r in runs {
        run_row(out, r, &mut figures);
    }
    out.push('\n');
    if let Some(g) = grid {
        figures.insert(0, ("comparison grid".into(), g.display().to_string()));
    }
    if !figures.is_empty() {
        out.push_str("Figures and data:\n\n");
        for (label, path) in figures {
            let _ = writeln!(out, "- [{label}]({path})");
        }
        out.push('\n');
    }
}

/// A deterministic markdown document covering every study in `results`.
pub fn emit_report(results: &[StudyResult]) -> String {
    let mut out = String::from("# Experiment report\n\n");
    out.push_str("FID is computed on composites over the evaluation background; lower is better. ");
    out.push_str("\"dangling\" is the mean fraction of test pixels drawn outside the true silhouette.\n\n");
    for r in results {
        section(&mut out, r);
    }
    out
}

/// Writes `emit_report(&[result])` to `<runs root>/<study>/report.md`.
pub fn write_study_report(runs_root: &Path, result: &StudyResult) -> Result<PathBuf> {
    let dir = runs_root.join(&result.name);
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let path = dir.join(REPORT_FILE);
    fs::write(&path, emit_report(std::slice::from_ref(result))).map_err(Error::io(&path))?;
    Ok(path)
}
