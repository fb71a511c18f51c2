use crate::affinity::{affinity_l2, affinity_l2_backward, combine_losses, mass_loss};
use crate::error::{Error, Result};
use crate::eval::scatter_ratio;
use crate::numerics::{DenseMatrix, RngStream};
use crate::targets::{target_same_class, BatchLabels};
use crate::trainer::cifar::{load_cifar10, Cifar10, CifarOptions};
use crate::trainer::config::{DataKind, ExperimentConfig, Task};
use crate::trainer::data::{augment_batch, gen_gaussian_clusters, Dataset};
use crate::trainer::log::{summary, EpochRecord, SkippedStep, TrainingLog};
use crate::trainer::model::{argmax, cross_entropy, ModelParams};
use crate::trainer::optim::{sgd_step, OptimizerState};

/// `(train, validation)` for the batch task.
pub fn load_batch_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match cfg.data {
        DataKind::Clusters => gen_gaussian_clusters(cfg.num_classes, cfg.per_class, cfg.dim, cfg.spread, cfg.seed)?
            .split(cfg.val_fraction, cfg.split_seed),
        DataKind::Cifar10 => {
            let dir = cfg
                .cifar_dir
                .as_ref()
                .ok_or_else(|| Error::config("data = cifar10 needs cifar_dir"))?;
            let c = load_cifar10(
                dir,
                &CifarOptions {
                    records_per_file: cfg.cifar_records_per_file,
                    per_class: (cfg.cifar_per_class > 0).then_some(cfg.cifar_per_class),
                    val_fraction: cfg.val_fraction,
                    split_seed: cfg.split_seed,
                },
            )?;
            Ok((Cifar10::to_dataset(&c.train), Cifar10::to_dataset(&c.val)))
        }
        DataKind::Scenes => Err(Error::config("the batch task reads clusters or cifar10")),
    }
}

/// Consecutive index chunks of `size`; a trailing partial chunk is dropped
/// unless it is the only one.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let full: Vec<&[usize]> = order.chunks_exact(size).collect();
    if full.is_empty() && !order.is_empty() {
        vec![order]
    } else {
        full
    }
}

fn evaluate(model: &ModelParams, ds: &Dataset) -> Result<(f64, DenseMatrix)> {
    let pass = model.forward(&ds.features)?;
    let hit = (0..ds.len())
        .filter(|&r| argmax(pass.logits.row(r)) == ds.labels[r])
        .count();
    Ok((hit as f64 / ds.len() as f64, pass.embedding().clone()))
}

/// Cross-entropy plus `λ·L_G` on same-class pairs of each mini-batch, with
/// the affinity taken between embedding rows. The model with the best
/// validation accuracy is kept for the final metrics.
pub fn train_batch_affinity(cfg: &ExperimentConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    if cfg.task != Task::BatchClassification {
        return Err(Error::config("train_batch_affinity needs task = batch"));
    }
    let (train, val) = load_batch_data(cfg)?;
    if train.is_empty() {
        return Err(Error::DegenerateTarget("training set is empty".into()));
    }
    if train.num_classes < 2 {
        return Err(Error::DegenerateTarget("need at least two classes".into()));
    }
    let held_out = if val.is_empty() { &train } else { &val };

    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.fork(1);
    let mut order_rng = root.fork(2);
    let mut aug_rng = root.fork(3);
    let mut model = ModelParams::init(cfg.arch, train.dim(), train.num_classes, &mut init_rng)?;
    let mut opt = OptimizerState::new(cfg.lr, cfg.momentum, cfg.weight_decay, cfg.lr_steps.clone())?;

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut skipped = Vec::new();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut last_uniform = 0.0;

    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let order = order_rng.permutation(train.len());
        let (mut main_sum, mut aff_sum, mut mass_sum, mut uniform_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut steps, mut supervised, mut correct, mut seen) = (0usize, 0usize, 0usize, 0usize);

        for (step, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let mut x = train.features.select_rows(idx);
            if cfg.augment {
                augment_batch(&mut x, train.image, &mut aug_rng);
            }
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let pass = model.forward(&x)?;
            let ce = cross_entropy(&pass.logits, &labels)?;
            let main_grads = model.backward(&pass, &ce.d_logits, None)?;

            let t = target_same_class(&BatchLabels::new(labels.clone(), train.num_classes)?);
            let grads = if t.is_empty() {
                skipped.push(SkippedStep { epoch, step });
                main_grads
            } else {
                let w = affinity_l2(pass.embedding())?;
                let ml = mass_loss(&w, &t, &cfg.loss)?;
                let aff_grads = if cfg.loss.lambda != 0.0 {
                    let d_emb = affinity_l2_backward(pass.embedding(), &ml.grad_raw)?;
                    let zero = DenseMatrix::zeros(ce.d_logits.rows(), ce.d_logits.cols());
                    model.backward(&pass, &zero, Some(&d_emb))?
                } else {
                    main_grads.zeros_like()
                };
                let n = labels.len() as f64;
                aff_sum += ml.loss;
                mass_sum += ml.report.mass;
                uniform_sum += t.selected_count() as f64 / (n * n);
                supervised += 1;
                combine_losses(ce.loss, &main_grads, ml.loss, &aff_grads, &cfg.loss)?.grads
            };
            sgd_step(model.params_mut(), &grads, &mut opt)?;

            main_sum += ce.loss;
            correct += ce.correct;
            seen += labels.len();
            steps += 1;
        }

        let (val_acc, _) = evaluate(&model, held_out)?;
        if best.as_ref().is_none_or(|(b, _)| val_acc >= *b) {
            best = Some((val_acc, model.clone()));
        }
        let per_sup = |s: f64| if supervised > 0 { s / supervised as f64 } else { 0.0 };
        last_uniform = per_sup(uniform_sum);
        records.push(EpochRecord {
            epoch: epoch + 1,
            lr: opt.learning_rate,
            main_loss: main_sum / steps as f64,
            aff_loss: per_sup(aff_sum),
            mass: per_sup(mass_sum),
            train_acc: correct as f64 / seen as f64,
            val_acc,
            recall: Vec::new(),
        });
    }

    let (_, selected) = best.expect("at least one epoch");
    let (_, emb) = evaluate(&selected, held_out)?;
    let scatter = scatter_ratio(&emb, &held_out.labels).ok();
    Ok(TrainingLog {
        recall_k: Vec::new(),
        summary: summary(cfg, &records, last_uniform, scatter, skipped.len()),
        records,
        skipped,
    })
}
