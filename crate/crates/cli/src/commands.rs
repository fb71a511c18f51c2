use std::path::{Path, PathBuf};

use serde::Serialize;

use affgraph::affinity::{target_mass, AffinityMatrix, Scope};
use affgraph::eval::{mass_loss_gradcheck, recall_of_scores, run_config, run_sweep, SweepAxis};
use affgraph::numerics::DenseMatrix;
use affgraph::targets::{read_scene_file, target_from_boxes, write_scene_file, PairMode};
use affgraph::trainer::{gen_gaussian_clusters, gen_relation_scenes, scene_config, DataKind, ExperimentConfig, Task};
use affgraph::{Error, Result};

fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::State(format!("json encoding failed: {e}")))
}

fn to_csv<R, I>(header: &[&str], rows: R) -> Result<String>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = String>,
{
    let header = header.iter().map(|h| h.to_string()).collect();
    matrix_csv(Some(header), rows.into_iter().map(|r| r.into_iter().collect()))
}

pub fn run(cfg: &ExperimentConfig, json: bool) -> Result<String> {
    let outcome = run_config(cfg)?;
    if json {
        outcome.log.summary_json().map(|s| s + "\n")
    } else {
        outcome.log.to_csv()
    }
}

pub fn sweep(cfg: &ExperimentConfig, axis: &str, values: &[String], json: bool) -> Result<String> {
    let report = run_sweep(cfg, SweepAxis::parse(axis)?, values)?;
    let path = if json { &report.summary_json } else { &report.merged_csv };
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

pub struct RecallArgs {
    pub scores: PathBuf,
    pub scene: PathBuf,
    pub ks: Vec<usize>,
    pub pair_mode: String,
    pub iou_thresh: f64,
}

#[derive(Serialize)]
struct RecallAt {
    k: usize,
    recall: f64,
}

#[derive(Serialize)]
struct RecallReport {
    proposals: usize,
    truth_pairs: usize,
    /// Matrix-softmax mass of the scores on the pair target.
    mass: f64,
    recall: Vec<RecallAt>,
}

/// Headerless numeric CSV as a dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let bad = |reason: String| Error::Ingestion {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: `{f}` is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows).map_err(|e| bad(e.to_string()))
}

pub fn recall(args: &RecallArgs, json: bool) -> Result<String> {
    if args.ks.is_empty() {
        return Err(Error::Config("need at least one K".into()));
    }
    let scene = read_scene_file(&args.scene)?;
    let scores = read_matrix_csv(&args.scores)?;
    let n = scene.proposals.len();
    if scores.shape() != (n, n) {
        return Err(Error::Ingestion {
            path: args.scores.clone(),
            reason: format!("expected a {n}x{n} matrix for {n} proposals, got {:?}", scores.shape()),
        });
    }
    let mode = PairMode::parse(&args.pair_mode)?;
    let target = target_from_boxes(&scene.proposals, &scene.ground_truth, mode, args.iou_thresh)?;
    let truth = target.unordered_pairs();
    let mass = target_mass(&AffinityMatrix::normalized_from_raw(scores.clone(), Scope::MatrixWise)?, &target)?.mass;
    let recall = args
        .ks
        .iter()
        .map(|&k| Ok(RecallAt { k, recall: recall_of_scores(&scores, &truth, k)? }))
        .collect::<Result<Vec<_>>>()?;
    if json {
        return to_json(&RecallReport {
            proposals: n,
            truth_pairs: truth.len(),
            mass,
            recall,
        });
    }
    to_csv(
        &["k", "recall"],
        recall.iter().map(|r| [r.k.to_string(), r.recall.to_string()]),
    )
}

pub fn gradcheck(instances: usize, size: usize, seed: u64, tol: f64, json: bool) -> Result<String> {
    if instances == 0 || size < 2 {
        return Err(Error::Config("gradcheck needs instances >= 1 and size >= 2".into()));
    }
    let rows = mass_loss_gradcheck(instances, size, seed)?;
    let out = if json {
        to_json(&rows)?
    } else {
        to_csv(
            &["form", "gamma", "scope", "instances", "max_rel_err"],
            rows.iter().map(|r| {
                [
                    r.form.name().to_string(),
                    r.gamma.to_string(),
                    r.scope.name().to_string(),
                    r.instances.to_string(),
                    r.max_rel_err.to_string(),
                ]
            }),
        )?
    };
    if let Some(bad) = rows.iter().find(|r| r.max_rel_err.is_nan() || r.max_rel_err >= tol) {
        // The table still goes out so the failing row can be inspected.
        print!("{out}");
        return Err(Error::Numeric(format!(
            "{} (gamma {}, {} scope) gradient off by {:e}, tolerance {tol:e}",
            bad.form.name(),
            bad.gamma,
            bad.scope.name(),
            bad.max_rel_err
        )));
    }
    Ok(out)
}

#[derive(Serialize)]
struct Written {
    file: PathBuf,
    rows: usize,
}

fn write_text(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn matrix_csv(header: Option<Vec<String>>, rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    if let Some(h) = header {
        w.write_record(h).map_err(wrap)?;
    }
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::State(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::State(e.to_string()))
}

/// Writes the synthetic data `cfg` would train on under `cfg.out`: a
/// labelled `clusters.csv` for the batch task, or one scene file plus a
/// headerless feature CSV per scene for the relation task.
pub fn gen_data(cfg: &ExperimentConfig, json: bool) -> Result<String> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    match cfg.task {
        Task::BatchClassification => {
            if cfg.data != DataKind::Clusters {
                return Err(Error::Config("gen-data only generates synthetic data (data = clusters)".into()));
            }
            let ds = gen_gaussian_clusters(cfg.num_classes, cfg.per_class, cfg.dim, cfg.spread, cfg.seed)?;
            let mut header = vec!["label".to_string()];
            header.extend((0..ds.dim()).map(|j| format!("f{j}")));
            let rows = (0..ds.len()).map(|r| {
                let mut row = vec![ds.labels[r].to_string()];
                row.extend(ds.features.row(r).iter().map(f64::to_string));
                row
            });
            let path = cfg.out.join("clusters.csv");
            write_text(&path, matrix_csv(Some(header), rows)?)?;
            written.push(Written { file: path, rows: ds.len() });
        }
        Task::RelationAttention => {
            for (i, scene) in gen_relation_scenes(&scene_config(cfg))?.iter().enumerate() {
                let boxes = cfg.out.join(format!("scene_{i:04}.txt"));
                write_scene_file(&boxes, &scene.boxes)?;
                written.push(Written {
                    file: boxes,
                    rows: scene.boxes.proposals.len() + scene.boxes.ground_truth.len(),
                });
                let feats = cfg.out.join(format!("scene_{i:04}_features.csv"));
                let rows = scene.features.iter_rows().map(|r| r.iter().map(f64::to_string).collect());
                write_text(&feats, matrix_csv(None, rows)?)?;
                written.push(Written {
                    file: feats,
                    rows: scene.features.rows(),
                });
            }
        }
    }
    if json {
        return to_json(&written);
    }
    to_csv(
        &["file", "rows"],
        written.iter().map(|w| [w.file.display().to_string(), w.rows.to_string()]),
    )
}
