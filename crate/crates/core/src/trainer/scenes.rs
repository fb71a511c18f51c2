//! Synthetic detection scenes: ground-truth boxes, jittered proposals around
//! them, and proposal features whose class signal fades with overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngStream};
use crate::targets::{iou, match_proposals, LabeledBox, SceneBoxes, DEFAULT_IOU_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub num_scenes: usize,
    pub objects_per_scene: usize,
    pub classes: usize,
    /// Proposal centre shift (relative to box size) and log-scale noise.
    pub jitter: f64,
    pub seed: u64,
    pub proposals_per_object: usize,
    pub feature_dim: usize,
    pub canvas: f64,
    pub min_size: f64,
    pub max_size: f64,
    /// Norm of the per-class prototype vectors.
    pub class_scale: f64,
    /// Std of the per-object appearance offset.
    pub instance_scale: f64,
    /// Std of the per-proposal feature noise.
    pub noise: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            num_scenes: 200,
            objects_per_scene: 8,
            classes: 4,
            jitter: 0.2,
            seed: 0,
            proposals_per_object: 3,
            feature_dim: 16,
            canvas: 100.0,
            min_size: 10.0,
            max_size: 40.0,
            class_scale: 3.0,
            instance_scale: 0.5,
            noise: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub boxes: SceneBoxes,
    /// One row per proposal.
    pub features: DenseMatrix,
    /// Class of the matched object, or `classes` (background) if unmatched.
    pub labels: Vec<usize>,
    /// Ground-truth object each proposal was drawn around.
    pub source: Vec<usize>,
    /// Unordered ground-truth object pairs of different classes.
    pub relations: Vec<(usize, usize)>,
}

/// `k` orthogonal directions of norm `scale` (Gram-Schmidt on Gaussian
/// draws). Falls back to random unit directions when `k > dim`.
fn prototypes(k: usize, dim: usize, scale: f64, rng: &mut RngStream) -> DenseMatrix {
    let mut out = rng.normal_matrix(k, dim, 1.0);
    for i in 0..k {
        if i < dim {
            for j in 0..i {
                let proj: f64 = (0..dim).map(|c| out[(i, c)] * out[(j, c)]).sum();
                for c in 0..dim {
                    out[(i, c)] -= proj * out[(j, c)];
                }
            }
        }
        let norm = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in out.row_mut(i) {
            *v /= norm;
        }
    }
    out.scale(scale)
}

pub fn gen_relation_scenes(cfg: &SceneGenConfig) -> Result<Vec<Scene>> {
    if cfg.objects_per_scene < 2 {
        return Err(Error::config("scenes need at least two objects"));
    }
    if cfg.classes == 0 || cfg.proposals_per_object == 0 || cfg.feature_dim == 0 {
        return Err(Error::config(
            "classes, proposals_per_object and feature_dim must be positive",
        ));
    }
    if !(cfg.jitter >= 0.0 && cfg.jitter.is_finite()) {
        return Err(Error::config(format!("jitter must be non-negative, got {}", cfg.jitter)));
    }
    if !(cfg.min_size > 0.0 && cfg.min_size <= cfg.max_size && cfg.max_size < cfg.canvas) {
        return Err(Error::config("need 0 < min_size ≤ max_size < canvas"));
    }
    let mut rng = RngStream::new(cfg.seed);
    let protos = prototypes(cfg.classes, cfg.feature_dim, cfg.class_scale, &mut rng);
    (0..cfg.num_scenes)
        .map(|_| gen_scene(cfg, &protos, &mut rng))
        .collect()
}

fn gen_scene(cfg: &SceneGenConfig, protos: &DenseMatrix, rng: &mut RngStream) -> Result<Scene> {
    let d = cfg.feature_dim;
    let mut gt = Vec::with_capacity(cfg.objects_per_scene);
    for o in 0..cfg.objects_per_scene {
        let class_id = rng.below(cfg.classes);
        let w = rng.uniform_range(cfg.min_size, cfg.max_size);
        let h = rng.uniform_range(cfg.min_size, cfg.max_size);
        let x0 = rng.uniform_range(0.0, cfg.canvas - w);
        let y0 = rng.uniform_range(0.0, cfg.canvas - h);
        gt.push(LabeledBox::new(x0, y0, x0 + w, y0 + h, class_id, o)?);
    }
    let appearance = rng.normal_matrix(cfg.objects_per_scene, d, cfg.instance_scale);

    let n = cfg.objects_per_scene * cfg.proposals_per_object;
    let mut proposals = Vec::with_capacity(n);
    let mut source = Vec::with_capacity(n);
    let mut features = DenseMatrix::zeros(n, d);
    for (o, g) in gt.iter().enumerate() {
        for _ in 0..cfg.proposals_per_object {
            let (w, h) = (g.width(), g.height());
            let dx = rng.normal() * cfg.jitter * w;
            let dy = rng.normal() * cfg.jitter * h;
            let sw = (rng.normal() * cfg.jitter).exp();
            let sh = (rng.normal() * cfg.jitter).exp();
            let p = if cfg.jitter == 0.0 {
                *g
            } else {
                let (cx, cy) = g.center();
                let (cx, cy) = (cx + dx, cy + dy);
                let (hw, hh) = (0.5 * w * sw, 0.5 * h * sh);
                LabeledBox::new(cx - hw, cy - hh, cx + hw, cy + hh, g.class_id, g.instance_id)?
            };
            let q = iou(&p, g);
            let r = proposals.len();
            for c in 0..d {
                features[(r, c)] =
                    q * (protos[(g.class_id, c)] + appearance[(o, c)]) + cfg.noise * rng.normal();
            }
            proposals.push(p);
            source.push(o);
        }
    }

    let labels = match_proposals(&proposals, &gt, DEFAULT_IOU_THRESHOLD)
        .into_iter()
        .map(|m| m.map_or(cfg.classes, |g| gt[g].class_id))
        .collect();
    let mut relations = Vec::new();
    for a in 0..gt.len() {
        for b in a + 1..gt.len() {
            if gt[a].class_id != gt[b].class_id {
                relations.push((a, b));
            }
        }
    }
    Ok(Scene {
        boxes: SceneBoxes {
            proposals,
            ground_truth: gt,
        },
        features,
        labels,
        source,
        relations,
    })
}
