use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::trainer::config::{ExperimentConfig, Task};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean main (cross-entropy) loss over the epoch's steps.
    pub main_loss: f64,
    /// Mean affinity loss over steps with a non-empty target.
    pub aff_loss: f64,
    /// Mean target affinity mass over steps with a non-empty target.
    pub mass: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Aligned with [`TrainingLog::recall_k`]; empty for the batch task.
    pub recall: Vec<f64>,
}

/// Step whose target selected no pairs, so the affinity term was dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SkippedStep {
    pub epoch: usize,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub task: Task,
    pub seed: u64,
    pub rng: &'static str,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub final_record: EpochRecord,
    /// Mean `|S| / N²` over the last epoch's supervised steps, the mass a
    /// uniform affinity would place on the target.
    pub final_uniform_mass: f64,
    /// Within/between class distance ratio of the selected model's
    /// embeddings on held-out data (batch task).
    pub scatter_ratio: Option<f64>,
    pub skipped_steps: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingLog {
    pub recall_k: Vec<usize>,
    pub records: Vec<EpochRecord>,
    pub skipped: Vec<SkippedStep>,
    pub summary: RunSummary,
}

/// Where [`TrainingLog::write`] put its files.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub const CSV_NAME: &str = "log.csv";
pub const JSON_NAME: &str = "summary.json";

impl TrainingLog {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "epoch", "lr", "main_loss", "aff_loss", "mass", "train_acc", "val_acc",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.recall_k.iter().map(|k| format!("recall@{k}")));
        h
    }

    pub fn row(&self, r: &EpochRecord) -> Vec<String> {
        let mut row = vec![
            r.epoch.to_string(),
            r.lr.to_string(),
            r.main_loss.to_string(),
            r.aff_loss.to_string(),
            r.mass.to_string(),
            r.train_acc.to_string(),
            r.val_acc.to_string(),
        ];
        row.extend(r.recall.iter().map(f64::to_string));
        row
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
        w.write_record(self.header()).map_err(wrap)?;
        for r in &self.records {
            w.write_record(self.row(r)).map_err(wrap)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::State(format!("csv encoding failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.summary)
            .map_err(|e| Error::State(format!("json encoding failed: {e}")))
    }

    pub fn write(&self, dir: &Path) -> Result<Artifacts> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(CSV_NAME);
        let json = dir.join(JSON_NAME);
        std::fs::write(&csv, self.to_csv()?).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&json, self.summary_json()? + "\n").map_err(|e| Error::io(&json, e))?;
        Ok(Artifacts { csv, json })
    }

    /// Recall at the given K in the last epoch, if logged.
    pub fn final_recall(&self, k: usize) -> Option<f64> {
        let pos = self.recall_k.iter().position(|&x| x == k)?;
        self.summary.final_record.recall.get(pos).copied()
    }
}

pub(crate) fn summary(
    cfg: &ExperimentConfig,
    records: &[EpochRecord],
    final_uniform_mass: f64,
    scatter_ratio: Option<f64>,
    skipped_steps: usize,
) -> RunSummary {
    let best = records
        .iter()
        .fold(None::<&EpochRecord>, |b, r| match b {
            Some(b) if b.val_acc > r.val_acc => Some(b),
            _ => Some(r),
        })
        .expect("at least one epoch");
    RunSummary {
        task: cfg.task,
        seed: cfg.seed,
        rng: RngStream::ALGORITHM,
        epochs: records.len(),
        best_epoch: best.epoch,
        best_val_acc: best.val_acc,
        final_record: records.last().expect("at least one epoch").clone(),
        final_uniform_mass,
        scatter_ratio,
        skipped_steps,
        config: cfg.clone(),
    }
}
