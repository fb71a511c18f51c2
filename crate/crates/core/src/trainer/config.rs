//! Flat `key = value` experiment configs layered over per-task defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affinity::{LossConfig, LossForm, Scope};
use crate::error::{Error, Result};
use crate::targets::PairMode;
use crate::trainer::model::Architecture;

pub const BATCH_DEFAULTS: &str = include_str!("../../configs/batch.conf");
pub const RELATION_DEFAULTS: &str = include_str!("../../configs/relation.conf");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BatchClassification,
    RelationAttention,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "batch" | "batch_classification" => Ok(Task::BatchClassification),
            "relation" | "relation_attention" => Ok(Task::RelationAttention),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::BatchClassification => "batch",
            Task::RelationAttention => "relation",
        }
    }

    pub fn defaults_text(self) -> &'static str {
        match self {
            Task::BatchClassification => BATCH_DEFAULTS,
            Task::RelationAttention => RELATION_DEFAULTS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Clusters,
    Cifar10,
    Scenes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataKind,
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub cifar_dir: Option<PathBuf>,
    pub cifar_per_class: usize,
    pub cifar_records_per_file: usize,
    pub num_scenes: usize,
    pub objects_per_scene: usize,
    pub proposals_per_object: usize,
    pub jitter: f64,
    pub feature_dim: usize,
    pub pair_mode: PairMode,
    pub iou_thresh: f64,
    pub recall_k: Vec<usize>,
    pub arch: Architecture,
    pub loss: LossConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_steps: Vec<(usize, f64)>,
    pub augment: bool,
    pub seed: u64,
    pub split_seed: u64,
    pub val_fraction: f64,
    pub out: PathBuf,
}

/// Ordered `key → value` pairs parsed from config text.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "{origin}:{}: expected `key = value`, got `{line}`",
                i + 1
            )));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::config(format!("{origin}:{}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `key=value` override as given on a command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn num<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = get(map, key)?;
    v.parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::config(format!("missing key `{key}`")))
}

fn boolean(map: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    match get(map, key)? {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(Error::config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn usize_list(s: &str, key: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::config(format!("`{key}`: cannot parse `{p}`")))
        })
        .collect()
}

fn lr_steps(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let bad = || Error::config(format!("`lr_steps`: expected epoch:lr, got `{p}`"));
            let (e, l) = p.split_once(':').ok_or_else(bad)?;
            Ok((e.trim().parse().map_err(|_| bad())?, l.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

impl ExperimentConfig {
    /// Keys an experiment config accepts.
    pub fn keys() -> Vec<String> {
        parse_kv(BATCH_DEFAULTS, "defaults")
            .expect("embedded defaults parse")
            .into_iter()
            .map(|(k, _)| k)
            .collect()
    }

    pub fn defaults(task: Task) -> Self {
        Self::from_pairs(&[("task".to_string(), task.name().to_string())])
            .expect("embedded defaults are valid")
    }

    /// Layers `pairs` (later wins) over the defaults of the task they name
    /// (batch if none), then validates.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let task = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "task")
            .map(|(_, v)| Task::parse(v))
            .transpose()?
            .unwrap_or(Task::BatchClassification);
        let mut map: BTreeMap<String, String> =
            parse_kv(task.defaults_text(), "defaults")?.into_iter().collect();
        for (k, v) in pairs {
            if !map.contains_key(k) {
                return Err(Error::config(format!("unknown key `{k}`")));
            }
            map.insert(k.clone(), v.clone());
        }
        let cfg = Self::from_map(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = parse_kv(text, origin)?;
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string(), overrides)
    }

    /// Applies one `key = value` change and revalidates.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut pairs = self.to_pairs();
        pairs.push((key.to_string(), value.to_string()));
        Self::from_pairs(&pairs)
    }

    fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let task = Task::parse(get(m, "task")?)?;
        let data = match get(m, "data")? {
            "clusters" => DataKind::Clusters,
            "cifar10" | "cifar" => DataKind::Cifar10,
            "scenes" => DataKind::Scenes,
            other => return Err(Error::config(format!("unknown data source `{other}`"))),
        };
        let arch = match get(m, "arch")? {
            "linear" => Architecture::Linear,
            "mlp" => Architecture::Mlp {
                hidden: num(m, "hidden")?,
            },
            "attention" => Architecture::AttentionHead { dk: num(m, "dk")? },
            other => return Err(Error::config(format!("unknown arch `{other}`"))),
        };
        let loss = LossConfig {
            form: LossForm::parse(get(m, "loss_form")?)?,
            gamma: num(m, "gamma")?,
            lambda: num(m, "lambda")?,
            mass_floor: num(m, "mass_floor")?,
            scope: Scope::parse(get(m, "scope")?)?,
            bce_normalize: boolean(m, "bce_normalize")?,
        };
        let cifar_dir = get(m, "cifar_dir")?;
        Ok(Self {
            task,
            data,
            num_classes: num(m, "num_classes")?,
            per_class: num(m, "per_class")?,
            dim: num(m, "dim")?,
            spread: num(m, "spread")?,
            cifar_dir: (!cifar_dir.is_empty()).then(|| PathBuf::from(cifar_dir)),
            cifar_per_class: num(m, "cifar_per_class")?,
            cifar_records_per_file: num(m, "cifar_records_per_file")?,
            num_scenes: num(m, "num_scenes")?,
            objects_per_scene: num(m, "objects_per_scene")?,
            proposals_per_object: num(m, "proposals_per_object")?,
            jitter: num(m, "jitter")?,
            feature_dim: num(m, "feature_dim")?,
            pair_mode: PairMode::parse(get(m, "pair_mode")?)?,
            iou_thresh: num(m, "iou_thresh")?,
            recall_k: usize_list(get(m, "recall_k")?, "recall_k")?,
            arch,
            loss,
            batch_size: num(m, "batch_size")?,
            epochs: num(m, "epochs")?,
            lr: num(m, "lr")?,
            momentum: num(m, "momentum")?,
            weight_decay: num(m, "weight_decay")?,
            lr_steps: lr_steps(get(m, "lr_steps")?)?,
            augment: boolean(m, "augment")?,
            seed: num(m, "seed")?,
            split_seed: num(m, "split_seed")?,
            val_fraction: num(m, "val_fraction")?,
            out: PathBuf::from(get(m, "out")?),
        })
    }

    /// Inverse of parsing: every key with its current value.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let (arch, hidden, dk) = match self.arch {
            Architecture::Linear => ("linear", 32, 8),
            Architecture::Mlp { hidden } => ("mlp", hidden, 8),
            Architecture::AttentionHead { dk } => ("attention", 32, dk),
        };
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let steps = self
            .lr_steps
            .iter()
            .map(|(e, l)| format!("{e}:{l}"))
            .collect::<Vec<_>>()
            .join(",");
        let data = match self.data {
            DataKind::Clusters => "clusters",
            DataKind::Cifar10 => "cifar10",
            DataKind::Scenes => "scenes",
        };
        let pair_mode = match self.pair_mode {
            PairMode::DifferentCategory => "different_category",
            PairMode::DifferentInstance => "different_instance",
        };
        let kv: Vec<(&str, String)> = vec![
            ("task", self.task.name().into()),
            ("data", data.into()),
            ("num_classes", self.num_classes.to_string()),
            ("per_class", self.per_class.to_string()),
            ("dim", self.dim.to_string()),
            ("spread", self.spread.to_string()),
            (
                "cifar_dir",
                self.cifar_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("cifar_per_class", self.cifar_per_class.to_string()),
            ("cifar_records_per_file", self.cifar_records_per_file.to_string()),
            ("num_scenes", self.num_scenes.to_string()),
            ("objects_per_scene", self.objects_per_scene.to_string()),
            ("proposals_per_object", self.proposals_per_object.to_string()),
            ("jitter", self.jitter.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("pair_mode", pair_mode.into()),
            ("iou_thresh", self.iou_thresh.to_string()),
            ("recall_k", join(&self.recall_k)),
            ("arch", arch.into()),
            ("hidden", hidden.to_string()),
            ("dk", dk.to_string()),
            ("loss_form", self.loss.form.name().into()),
            ("gamma", self.loss.gamma.to_string()),
            ("lambda", self.loss.lambda.to_string()),
            ("scope", self.loss.scope.name().into()),
            ("mass_floor", self.loss.mass_floor.to_string()),
            ("bce_normalize", self.loss.bce_normalize.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("lr_steps", steps),
            ("augment", self.augment.to_string()),
            ("seed", self.seed.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("out", self.out.display().to_string()),
        ];
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn render(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |msg: String| Err(Error::config(msg));
        match (self.task, self.arch) {
            (Task::BatchClassification, Architecture::AttentionHead { .. }) => {
                return bad("the batch task takes a linear or mlp model".into())
            }
            (Task::RelationAttention, Architecture::Linear | Architecture::Mlp { .. }) => {
                return bad("the relation task takes the attention model".into())
            }
            _ => {}
        }
        match (self.task, self.data) {
            (Task::BatchClassification, DataKind::Scenes) => {
                return bad("the batch task reads clusters or cifar10".into())
            }
            (Task::RelationAttention, DataKind::Clusters | DataKind::Cifar10) => {
                return bad("the relation task reads scenes".into())
            }
            _ => {}
        }
        if self.data == DataKind::Cifar10 && self.cifar_dir.is_none() {
            return bad("data = cifar10 needs cifar_dir".into());
        }
        if self.task == Task::BatchClassification && self.loss.lambda > 0.0 && self.batch_size < 2 {
            return bad(format!(
                "affinity supervision needs batch_size ≥ 2, got {}",
                self.batch_size
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1".into());
        }
        if self.num_classes < 2 && self.task == Task::BatchClassification {
            return bad("the batch task needs at least two classes".into());
        }
        if !(self.iou_thresh > 0.0 && self.iou_thresh < 1.0) {
            return bad(format!("iou_thresh must lie in (0, 1), got {}", self.iou_thresh));
        }
        if self.recall_k.is_empty() || self.recall_k.contains(&0) {
            return bad("recall_k needs at least one positive K".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        crate::trainer::OptimizerState::new(self.lr, self.momentum, self.weight_decay, self.lr_steps.clone())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_the_same_keys() {
        let keys = |t: &str| {
            let mut k: Vec<_> = parse_kv(t, "x").unwrap().into_iter().map(|(k, _)| k).collect();
            k.sort();
            k
        };
        assert_eq!(keys(BATCH_DEFAULTS), keys(RELATION_DEFAULTS));
        let mut rendered: Vec<_> = ExperimentConfig::defaults(Task::BatchClassification)
            .to_pairs()
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        rendered.sort();
        assert_eq!(rendered, keys(BATCH_DEFAULTS));
    }

    #[test]
    fn paper_defaults() {
        let b = ExperimentConfig::defaults(Task::BatchClassification);
        assert_eq!((b.loss.lambda, b.loss.gamma, b.momentum, b.weight_decay), (0.1, 4.0, 0.9, 5e-4));
        let r = ExperimentConfig::defaults(Task::RelationAttention);
        assert_eq!((r.loss.lambda, r.loss.gamma), (0.01, 2.0));
        assert_eq!(r.arch, Architecture::AttentionHead { dk: 8 });
    }

    #[test]
    fn render_round_trips() {
        for task in [Task::BatchClassification, Task::RelationAttention] {
            let c = ExperimentConfig::defaults(task)
                .with("lr_steps", "10:0.01,20:0.001")
                .unwrap()
                .with("cifar_dir", "/data/c10")
                .unwrap();
            let back = ExperimentConfig::parse(&c.render(), "rendered", &[]).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn overrides_win() {
        let text = "task = batch\nlambda = 0.5\n";
        let c = ExperimentConfig::parse(text, "t", &[parse_override("lambda=0").unwrap()]).unwrap();
        assert_eq!(c.loss.lambda, 0.0);
    }

    #[test]
    fn errors() {
        for text in [
            "nonsense = 1",
            "lambda = abc",
            "batch_size = 1",
            "gamma = -1",
            "loss_form = hinge",
            "just a line",
            "arch = attention",
            "data = cifar10",
            "iou_thresh = 1.0",
            "momentum = 1.0",
        ] {
            let res = ExperimentConfig::parse(text, "t", &[]);
            assert!(matches!(res, Err(Error::Config(_))), "{text}: {res:?}");
        }
    }

    #[test]
    fn baseline_may_use_single_sample_batches() {
        assert!(ExperimentConfig::parse("batch_size = 1\nlambda = 0", "t", &[]).is_ok());
    }
}
