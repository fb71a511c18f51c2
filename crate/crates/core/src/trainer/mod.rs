//! Desk-scale training: small models, SGD with momentum, synthetic data,
//! CIFAR-10 ingestion, and the two experiment loops (batch classification
//! with same-class affinity supervision, and proposal attention with
//! relation supervision).

mod batch_task;
mod cifar;
mod config;
mod data;
mod log;
mod model;
mod optim;
mod relation_task;
mod scenes;

pub use batch_task::{load_batch_data, train_batch_affinity};
pub use cifar::{
    load_cifar10, read_batch, Cifar10, CifarOptions, CifarRecord, CIFAR_SHAPE, IMAGE_BYTES,
    NUM_CLASSES as CIFAR_CLASSES, RECORD_BYTES, TEST_FILE, TRAIN_FILES,
};
pub use config::{
    parse_kv, parse_override, DataKind, ExperimentConfig, Task, BATCH_DEFAULTS, RELATION_DEFAULTS,
};
pub use data::{
    augment_batch, flip_horizontal, gen_gaussian_clusters, pad_crop, Dataset, ImageShape,
    AUGMENT_PAD, CLUSTER_RADIUS,
};
pub use log::{Artifacts, EpochRecord, RunSummary, SkippedStep, TrainingLog, CSV_NAME, JSON_NAME};
pub use model::{
    argmax, cross_entropy, Architecture, AttentionPass, CrossEntropy, FeedForwardPass, ModelParams,
};
pub use optim::{sgd_step, OptimizerState};
pub use relation_task::{
    evaluate_scenes, load_relation_data, mean_scene_mass, prepare_scene, scene_config,
    train_relation_attention, PreparedScene,
};
pub use scenes::{gen_relation_scenes, Scene, SceneGenConfig};

use crate::error::Result;

/// Runs the loop matching `cfg.task`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainingLog> {
    match cfg.task {
        Task::BatchClassification => train_batch_affinity(cfg),
        Task::RelationAttention => train_relation_attention(cfg),
    }
}
