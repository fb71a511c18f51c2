use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngStream};

/// Channel-planar image layout of a feature row (`c` planes of `h × w`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labeled feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Set for image data; enables augmentation.
    pub image: Option<ImageShape>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::shape(format!("label {bad} outside {num_classes} classes")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            image: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            image: self.image,
        }
    }

    /// Seeded split into `(train, validation)`; the validation part holds
    /// `round(fraction · len)` rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::config(format!(
                "validation fraction must lie in [0, 1), got {fraction}"
            )));
        }
        let perm = RngStream::new(seed).permutation(self.len());
        let n_val = (fraction * self.len() as f64).round() as usize;
        let (val, train) = perm.split_at(n_val);
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        Ok((self.subset(&train), self.subset(&val)))
    }
}

/// Radius of the sphere the cluster means are placed on.
pub const CLUSTER_RADIUS: f64 = 2.0;

/// `num_classes` isotropic Gaussian clusters with means at random
/// directions scaled to [`CLUSTER_RADIUS`]. Rows come shuffled.
pub fn gen_gaussian_clusters(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::config(format!("spread must be positive, got {spread}")));
    }
    if num_classes == 0 || dim == 0 {
        return Err(Error::config("clusters need at least one class and one dimension"));
    }
    let mut rng = RngStream::new(seed);
    let mut means = rng.normal_matrix(num_classes, dim, 1.0);
    for c in 0..num_classes {
        let row = means.row_mut(c);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in row {
            *v *= CLUSTER_RADIUS / norm;
        }
    }
    let n = num_classes * per_class;
    let mut features = DenseMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        for k in 0..per_class {
            let r = c * per_class + k;
            for j in 0..dim {
                features[(r, j)] = means[(c, j)] + spread * rng.normal();
            }
            labels.push(c);
        }
    }
    let perm = rng.permutation(n);
    let ds = Dataset::new(features, labels, num_classes)?;
    Ok(ds.subset(&perm))
}

/// Mirror each channel plane left to right.
pub fn flip_horizontal(row: &mut [f64], shape: ImageShape) {
    for plane in row.chunks_mut(shape.height * shape.width) {
        for line in plane.chunks_mut(shape.width) {
            line.reverse();
        }
    }
}

/// Zero-pad by `pad` on every side, then crop back to the original size at
/// offset `(dy, dx)` into the padded image, both in `[0, 2·pad]`.
pub fn pad_crop(row: &[f64], shape: ImageShape, pad: usize, dy: usize, dx: usize) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let mut out = vec![0.0; row.len()];
    for c in 0..shape.channels {
        for y in 0..h {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx) as isize - pad as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[c * h * w + y * w + x] = row[c * h * w + sy as usize * w + sx as usize];
            }
        }
    }
    out
}

/// Padding used by [`augment_batch`].
pub const AUGMENT_PAD: usize = 4;

/// Random horizontal flip (p = 0.5) and pad-and-crop per row. Leaves
/// non-image data untouched.
pub fn augment_batch(x: &mut DenseMatrix, image: Option<ImageShape>, rng: &mut RngStream) {
    let Some(shape) = image else { return };
    if shape.len() != x.cols() {
        return;
    }
    for r in 0..x.rows() {
        let flip = rng.uniform() < 0.5;
        let dy = rng.below(2 * AUGMENT_PAD + 1);
        let dx = rng.below(2 * AUGMENT_PAD + 1);
        let row = x.row_mut(r);
        if flip {
            flip_horizontal(row, shape);
        }
        let cropped = pad_crop(row, shape, AUGMENT_PAD, dy, dx);
        row.copy_from_slice(&cropped);
    }
}
