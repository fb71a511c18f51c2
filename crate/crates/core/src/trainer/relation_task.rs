use crate::affinity::{combine_losses, mass_loss, target_mass, TargetMatrix};
use crate::error::{Error, Result};
use crate::eval::recall_of_scores;
use crate::numerics::{DenseMatrix, ParamSet, RngStream};
use crate::targets::{match_proposals, target_from_boxes, PairMode};
use crate::trainer::config::{ExperimentConfig, Task};
use crate::trainer::log::{summary, EpochRecord, SkippedStep, TrainingLog};
use crate::trainer::model::{argmax, cross_entropy, ModelParams};
use crate::trainer::optim::{sgd_step, OptimizerState};
use crate::trainer::scenes::{gen_relation_scenes, Scene, SceneGenConfig};

/// A scene with everything training and evaluation need precomputed.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    /// Supervision target under the configured pair mode.
    pub target: TargetMatrix,
    /// Unordered different-category proposal pairs, the recall truth.
    pub truth: Vec<(usize, usize)>,
}

pub fn prepare_scene(scene: &Scene, cfg: &ExperimentConfig) -> Result<PreparedScene> {
    let (props, gt) = (&scene.boxes.proposals, &scene.boxes.ground_truth);
    let labels = match_proposals(props, gt, cfg.iou_thresh)
        .into_iter()
        .map(|m| m.map_or(cfg.num_classes, |g| gt[g].class_id))
        .collect();
    let target = target_from_boxes(props, gt, cfg.pair_mode, cfg.iou_thresh)?;
    let truth = if cfg.pair_mode == PairMode::DifferentCategory {
        target.unordered_pairs()
    } else {
        target_from_boxes(props, gt, PairMode::DifferentCategory, cfg.iou_thresh)?.unordered_pairs()
    };
    Ok(PreparedScene {
        features: scene.features.clone(),
        labels,
        target,
        truth,
    })
}

pub fn scene_config(cfg: &ExperimentConfig) -> SceneGenConfig {
    SceneGenConfig {
        num_scenes: cfg.num_scenes,
        objects_per_scene: cfg.objects_per_scene,
        classes: cfg.num_classes,
        jitter: cfg.jitter,
        seed: cfg.seed,
        proposals_per_object: cfg.proposals_per_object,
        feature_dim: cfg.feature_dim,
        ..SceneGenConfig::default()
    }
}

/// `(train, eval)` scenes. With no held-out scenes, evaluation reuses the
/// training scenes.
pub fn load_relation_data(cfg: &ExperimentConfig) -> Result<(Vec<PreparedScene>, Vec<PreparedScene>)> {
    let scenes = gen_relation_scenes(&scene_config(cfg))?;
    let prepared = scenes
        .iter()
        .map(|s| prepare_scene(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let perm = RngStream::new(cfg.split_seed).permutation(prepared.len());
    let n_eval = (cfg.val_fraction * prepared.len() as f64).round() as usize;
    let mut is_eval = vec![false; prepared.len()];
    for &i in &perm[..n_eval] {
        is_eval[i] = true;
    }
    let (eval, train): (Vec<_>, Vec<_>) = prepared.into_iter().zip(is_eval).partition(|(_, e)| *e);
    let train: Vec<_> = train.into_iter().map(|(s, _)| s).collect();
    let eval: Vec<_> = eval.into_iter().map(|(s, _)| s).collect();
    let eval = if eval.is_empty() { train.clone() } else { eval };
    Ok((train, eval))
}

/// Classification accuracy and mean recall@K (over scenes with a
/// non-empty truth) on `scenes`.
pub fn evaluate_scenes(model: &ModelParams, scenes: &[PreparedScene], ks: &[usize]) -> Result<(f64, Vec<f64>)> {
    let (mut hit, mut total) = (0usize, 0usize);
    let mut sums = vec![0.0; ks.len()];
    let mut counted = 0usize;
    for s in scenes {
        let pass = model.forward_attention(&s.features)?;
        for (r, &y) in s.labels.iter().enumerate() {
            if argmax(pass.logits.row(r)) == y {
                hit += 1;
            }
        }
        total += s.labels.len();
        if s.truth.is_empty() {
            continue;
        }
        for (sum, &k) in sums.iter_mut().zip(ks) {
            *sum += recall_of_scores(pass.attention.raw.raw(), &s.truth, k)?;
        }
        counted += 1;
    }
    let recall = sums
        .into_iter()
        .map(|s| if counted > 0 { s / counted as f64 } else { f64::NAN })
        .collect();
    Ok((hit as f64 / total.max(1) as f64, recall))
}

/// Proposal classification plus `λ·L_G` on the attention scores of each
/// scene, with recall@K of the top-scored pairs logged every epoch.
pub fn train_relation_attention(cfg: &ExperimentConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    if cfg.task != Task::RelationAttention {
        return Err(Error::config("train_relation_attention needs task = relation"));
    }
    let (train, eval) = load_relation_data(cfg)?;
    if train.is_empty() {
        return Err(Error::DegenerateTarget("no training scenes".into()));
    }
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.fork(1);
    let mut order_rng = root.fork(2);
    let mut model = ModelParams::init(cfg.arch, cfg.feature_dim, cfg.num_classes + 1, &mut init_rng)?;
    let mut opt = OptimizerState::new(cfg.lr, cfg.momentum, cfg.weight_decay, cfg.lr_steps.clone())?;

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut skipped = Vec::new();
    let mut last_uniform = 0.0;

    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let order = order_rng.permutation(train.len());
        let (mut main_sum, mut aff_sum, mut mass_sum, mut uniform_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut scenes_seen, mut supervised, mut correct, mut seen) = (0usize, 0usize, 0usize, 0usize);

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Option<ParamSet> = None;
            for &i in chunk {
                let s = &train[i];
                let pass = model.forward_attention(&s.features)?;
                let ce = cross_entropy(&pass.logits, &s.labels)?;
                let main_grads = model.backward_attention(&pass, &ce.d_logits, None)?;
                let grads = if s.target.is_empty() {
                    skipped.push(SkippedStep { epoch, step });
                    main_grads
                } else {
                    let ml = mass_loss(&pass.attention.raw, &s.target, &cfg.loss)?;
                    let aff_grads = if cfg.loss.lambda != 0.0 {
                        let zero = DenseMatrix::zeros(ce.d_logits.rows(), ce.d_logits.cols());
                        model.backward_attention(&pass, &zero, Some(&ml.grad_raw))?
                    } else {
                        main_grads.zeros_like()
                    };
                    let n = s.labels.len() as f64;
                    aff_sum += ml.loss;
                    mass_sum += ml.report.mass;
                    uniform_sum += s.target.selected_count() as f64 / (n * n);
                    supervised += 1;
                    combine_losses(ce.loss, &main_grads, ml.loss, &aff_grads, &cfg.loss)?.grads
                };
                match acc.as_mut() {
                    Some(a) => a.add_scaled(&grads, 1.0)?,
                    None => acc = Some(grads),
                }
                main_sum += ce.loss;
                correct += ce.correct;
                seen += s.labels.len();
                scenes_seen += 1;
            }
            let mut grads = acc.expect("chunks are non-empty");
            grads.scale_in_place(1.0 / chunk.len() as f64);
            sgd_step(model.params_mut(), &grads, &mut opt)?;
        }

        let (val_acc, recall) = evaluate_scenes(&model, &eval, &cfg.recall_k)?;
        let per_sup = |s: f64| if supervised > 0 { s / supervised as f64 } else { 0.0 };
        last_uniform = per_sup(uniform_sum);
        records.push(EpochRecord {
            epoch: epoch + 1,
            lr: opt.learning_rate,
            main_loss: main_sum / scenes_seen as f64,
            aff_loss: per_sup(aff_sum),
            mass: per_sup(mass_sum),
            train_acc: correct as f64 / seen as f64,
            val_acc,
            recall,
        });
    }

    Ok(TrainingLog {
        recall_k: cfg.recall_k.clone(),
        summary: summary(cfg, &records, last_uniform, None, skipped.len()),
        records,
        skipped,
    })
}

/// Target mass of the current model on `scenes` (mean over scenes with a
/// non-empty target), under the configured scope.
pub fn mean_scene_mass(model: &ModelParams, scenes: &[PreparedScene], cfg: &ExperimentConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in scenes.iter().filter(|s| !s.target.is_empty()) {
        let pass = model.forward_attention(&s.features)?;
        let w = pass.attention.raw.clone().normalize(cfg.loss.scope)?;
        sum += target_mass(&w, &s.target)?.mass;
        n += 1;
    }
    Ok(if n > 0 { sum / n as f64 } else { 0.0 })
}
