//! Result files: CSV tables with a fixed header, plus `metadata.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use tmf_core::learning::{write_history_csv, HistoryRow, TrainConfig};
use tmf_core::metrics::ConcentrationSeries;
use tmf_core::TrajectoryRecord;

use crate::config::ExperimentConfig;
use crate::experiments::EVAL_STREAM;

/// Collects the files written by one command so they can be listed in the
/// metadata.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Writes `rows` under an explicit header, so empty tables still carry
    /// their column names.
    pub fn csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(self.open(name)?);
        w.write_record(header)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn series(&mut self, name: &str, series: &ConcentrationSeries) -> Result<()> {
        let mut out = self.open(name)?;
        series.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn history(&mut self, name: &str, rows: &[HistoryRow]) -> Result<()> {
        let mut out = self.open(name)?;
        write_history_csv(rows, &mut out)?;
        out.flush()?;
        Ok(())
    }

    /// One row per step: `t, mu_0, mu_1, ...`.
    pub fn trajectory(&mut self, name: &str, trajectory: &TrajectoryRecord) -> Result<()> {
        let width = trajectory.at(0).len();
        let mut w = csv::Writer::from_writer(self.open(name)?);
        let mut header = vec!["t".to_string()];
        header.extend((0..width).map(|o| format!("mu_{o}")));
        w.write_record(&header)?;
        for (t, mu) in trajectory.distributions.iter().enumerate() {
            let mut record = vec![t.to_string()];
            record.extend(mu.iter().map(|p| p.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut out = self.open(name)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// Writes `metadata.json` describing the run.
    pub fn finish<S: Serialize>(
        mut self,
        cfg: &ExperimentConfig,
        wall_time_seconds: f64,
        summary: &S,
        failures: &[String],
    ) -> Result<()> {
        let files = std::mem::take(&mut self.files);
        let meta = Metadata {
            experiment: cfg.experiment.map(|e| e.as_str()).unwrap_or("unspecified"),
            version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds,
            seeds: (0..cfg.num_seeds).map(|i| cfg.seed_for(i)).collect(),
            evaluation_streams: format!("evaluation rollout j of seed s uses stream {EVAL_STREAM} + j of seed s"),
            files,
            failures,
            summary,
            srsg_training: cfg.srsg_train_config(),
            dqg_training: cfg.dqg_train_config(),
            config: cfg,
        };
        self.json("metadata.json", &meta)
    }
}

#[derive(Serialize)]
struct Metadata<'a, S> {
    experiment: &'static str,
    version: &'static str,
    wall_time_seconds: f64,
    seeds: Vec<u64>,
    evaluation_streams: String,
    files: Vec<String>,
    failures: &'a [String],
    summary: &'a S,
    /// Training settings after overrides; `config` holds only the overrides.
    srsg_training: TrainConfig,
    dqg_training: TrainConfig,
    config: &'a ExperimentConfig,
}
