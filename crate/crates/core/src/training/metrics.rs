use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 6] = ["step", "g_total", "g_adv", "g_l1", "d_loss", "steps_per_sec"];

/// One line of `metrics.csv`. `steps_per_sec` is wall-clock throughput of
/// that step; every other column is a pure function of seed and data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub g_total: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub d_loss: f64,
    pub steps_per_sec: f64,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Invalid(format!("{}: {other:?}", path.display())),
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader.deserialize().map(|r| r.map_err(csv_err(path))).collect()
}

/// Append-only writer over `metrics.csv`.
pub(crate) struct MetricsLog {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl MetricsLog {
    /// Opens the log for a run positioned at `step`: a fresh file at step 0,
    /// otherwise the existing rows up to `step` are kept and later ones
    /// dropped, so a resumed run never repeats a step.
    pub(crate) fn open(path: &Path, step: u64) -> Result<Self> {
        let kept = if step == 0 {
            Vec::new()
        } else {
            read_metrics(path)?.into_iter().filter(|r| r.step <= step).collect()
        };
        let tmp = path.with_extension("csv.partial");
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(&tmp)
                .map_err(csv_err(&tmp))?;
            w.write_record(METRICS_HEADER).map_err(csv_err(&tmp))?;
            for row in &kept {
                w.serialize(row).map_err(csv_err(&tmp))?;
            }
            w.flush().map_err(Error::io(&tmp))?;
        }
        fs::rename(&tmp, path).map_err(Error::io(path))?;
        let file = fs::OpenOptions::new().append(true).open(path).map_err(Error::io(path))?;
        let writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub(crate) fn append(&mut self, row: &MetricRow) -> Result<()> {
        self.writer.serialize(row).map_err(csv_err(&self.path))
    }

    pub(crate) fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(Error::io(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricRow {
        MetricRow {
            step,
            g_total: 1.5 * step as f64,
            g_adv: 0.1,
            g_l1: 0.01,
            d_loss: 1.3,
            steps_per_sec: 7.0,
        }
    }

    #[test]
    fn resume_truncates_later_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut log = MetricsLog::open(&path, 0).unwrap();
        for s in 1..=5 {
            log.append(&row(s)).unwrap();
        }
        log.flush().unwrap();
        drop(log);
        assert_eq!(read_metrics(&path).unwrap().len(), 5);

        let mut log = MetricsLog::open(&path, 3).unwrap();
        log.append(&row(4)).unwrap();
        log.flush().unwrap();
        let steps: Vec<u64> = read_metrics(&path).unwrap().iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![1, 2, 3, 4]);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,g_total,g_adv,g_l1,d_loss,steps_per_sec\n"));
    }
}
