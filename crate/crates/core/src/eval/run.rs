use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::{train, Artifacts, ExperimentConfig, Task, TrainingLog};

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: TrainingLog,
    pub artifacts: Artifacts,
}

/// Trains `cfg` and writes the CSV log and JSON summary under `cfg.out`.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let log = train(cfg)?;
    let artifacts = log.write(&cfg.out)?;
    Ok(RunOutcome { log, artifacts })
}

pub fn run_experiment(config: &Path, overrides: &[(String, String)]) -> Result<RunOutcome> {
    run_config(&ExperimentConfig::load(config, overrides)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    LossForm,
    Gamma,
    Lambda,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "loss_form" => Ok(SweepAxis::LossForm),
            "gamma" => Ok(SweepAxis::Gamma),
            "lambda" => Ok(SweepAxis::Lambda),
            other => Err(Error::config(format!(
                "unknown sweep axis `{other}` (loss_form, gamma, lambda)"
            ))),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::LossForm => "loss_form",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Lambda => "lambda",
        }
    }
}

/// Metric arms are ranked by: final recall@50 (or the first logged K) for
/// the relation task, best validation accuracy for the batch task.
pub fn arm_metric(log: &TrainingLog) -> (String, f64) {
    match log.summary.task {
        Task::RelationAttention => {
            let k = if log.recall_k.contains(&50) { 50 } else { log.recall_k[0] };
            (format!("recall@{k}"), log.final_recall(k).unwrap_or(f64::NAN))
        }
        Task::BatchClassification => ("best_val_acc".into(), log.summary.best_val_acc),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RankedArm {
    pub value: String,
    pub metric: f64,
    pub final_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub metric: String,
    /// Best first; ties keep the order the values were given in.
    pub ranking: Vec<RankedArm>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub summary: SweepSummary,
    pub logs: Vec<(String, TrainingLog)>,
    pub merged_csv: PathBuf,
    pub summary_json: PathBuf,
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep_summary.json";

fn merged_csv(axis: SweepAxis, logs: &[(String, TrainingLog)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    if let Some((_, first)) = logs.first() {
        let mut header = vec!["axis".to_string(), "value".to_string()];
        header.extend(first.header());
        w.write_record(header).map_err(wrap)?;
    }
    for (value, log) in logs {
        for r in &log.records {
            let mut row = vec![axis.key().to_string(), value.clone()];
            row.extend(log.row(r));
            w.write_record(row).map_err(wrap)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::State(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
}

fn write_sweep(dir: &Path, axis: SweepAxis, logs: &[(String, TrainingLog)]) -> Result<(SweepSummary, PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(SWEEP_CSV);
    std::fs::write(&csv_path, merged_csv(axis, logs)?).map_err(|e| Error::io(&csv_path, e))?;

    let metric = logs.first().map(|(_, l)| arm_metric(l).0).unwrap_or_default();
    let mut ranking: Vec<RankedArm> = logs
        .iter()
        .map(|(value, log)| RankedArm {
            value: value.clone(),
            metric: arm_metric(log).1,
            final_mass: log.summary.final_record.mass,
        })
        .collect();
    // Stable sort keeps the given order among equal metrics; NaN sinks.
    ranking.sort_by(|a, b| {
        let key = |m: f64| if m.is_nan() { f64::NEG_INFINITY } else { m };
        key(b.metric).total_cmp(&key(a.metric))
    });
    let summary = SweepSummary {
        axis,
        metric,
        ranking,
    };
    let json_path = dir.join(SWEEP_JSON);
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::State(format!("json encoding failed: {e}")))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok((summary, csv_path, json_path))
}

/// One sub-run per value, all sharing `base.seed`, each writing under
/// `base.out/<axis>_<value>`. The merged CSV and ranking are rewritten
/// after every finished arm, so a failing arm leaves the earlier arms'
/// results on disk.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let arms = values
        .iter()
        .map(|v| {
            let dir = base.out.join(format!("{}_{}", axis.key(), v));
            base.with(axis.key(), v)?
                .with("out", &dir.display().to_string())
                .map(|c| (v.clone(), c))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut logs: Vec<(String, TrainingLog)> = Vec::with_capacity(arms.len());
    for (value, cfg) in arms {
        let outcome = run_config(&cfg);
        match outcome {
            Ok(o) => {
                logs.push((value, o.log));
                write_sweep(&base.out, axis, &logs)?;
            }
            Err(e) => {
                if !logs.is_empty() {
                    write_sweep(&base.out, axis, &logs)?;
                }
                return Err(e);
            }
        }
    }
    let (summary, merged_csv, summary_json) = write_sweep(&base.out, axis, &logs)?;
    Ok(SweepReport {
        summary,
        logs,
        merged_csv,
        summary_json,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &Path) -> ExperimentConfig {
        ExperimentConfig::defaults(Task::BatchClassification)
            .with("per_class", "30")
            .unwrap()
            .with("epochs", "2")
            .unwrap()
            .with("batch_size", "16")
            .unwrap()
            .with("out", &dir.display().to_string())
            .unwrap()
    }

    #[test]
    fn sweep_merges_arms() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<String> = ["0", "2", "5"].iter().map(|s| s.to_string()).collect();
        let rep = run_sweep(&base(dir.path()), SweepAxis::Gamma, &vals).unwrap();
        assert_eq!(rep.logs.len(), 3);
        let text = std::fs::read_to_string(&rep.merged_csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2);
        assert!(text.starts_with("axis,value,epoch,"));
        assert_eq!(rep.summary.ranking.len(), 3);
        assert!(dir.path().join("gamma_5").join("log.csv").exists());
    }

    #[test]
    fn invalid_value_rejected_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec!["0.1".to_string(), "-3".to_string()];
        let err = run_sweep(&base(dir.path()), SweepAxis::Lambda, &vals).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(!dir.path().join(SWEEP_CSV).exists());
    }

    #[test]
    fn failing_arm_keeps_earlier_results() {
        let dir = tempfile::tempdir().unwrap();
        // The second arm passes validation but overflows during training.
        let vals = vec!["0.1".to_string(), "1e300".to_string()];
        let err = run_sweep(&base(dir.path()), SweepAxis::Lambda, &vals).unwrap_err();
        assert_eq!(err.exit_code(), 4, "{err}");
        let text = std::fs::read_to_string(dir.path().join(SWEEP_CSV)).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);
        assert!(text.lines().skip(1).all(|l| l.starts_with("lambda,0.1,")));
    }
}
