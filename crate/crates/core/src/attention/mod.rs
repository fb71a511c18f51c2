//! Single-head appearance attention: scaled dot-product scores between
//! projected node features, row-softmax weights, and weighted aggregation.
//! The raw scores are exposed so an affinity loss can supervise them, and
//! [`attention_backward`] folds that loss's gradient into the same pass.

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::affinity::{affinity_dot, affinity_dot_backward, AffinityMatrix};
use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, softmax_rows_backward, DenseMatrix, RngStream};

/// Key and query projections, both `d × d_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub wk: DenseMatrix,
    pub wq: DenseMatrix,
}

impl AttentionParams {
    pub fn new(wk: DenseMatrix, wq: DenseMatrix) -> Result<Self> {
        if wk.shape() != wq.shape() || wk.cols() == 0 || wk.rows() == 0 {
            return Err(Error::shape(format!(
                "projections must share a non-empty shape, got {:?} and {:?}",
                wk.shape(),
                wq.shape()
            )));
        }
        if !wk.is_finite() || !wq.is_finite() {
            return Err(Error::Numeric("non-finite attention weights".into()));
        }
        Ok(Self { wk, wq })
    }

    /// Entries uniform in `±1/√d`.
    pub fn init(d: usize, dk: usize, rng: &mut RngStream) -> Result<Self> {
        if d == 0 || dk == 0 {
            return Err(Error::shape("attention needs d ≥ 1 and d_k ≥ 1"));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let wk = rng.uniform_matrix(d, dk, -bound, bound);
        let wq = rng.uniform_matrix(d, dk, -bound, bound);
        Self::new(wk, wq)
    }

    pub fn zeros(d: usize, dk: usize) -> Result<Self> {
        Self::new(DenseMatrix::zeros(d, dk), DenseMatrix::zeros(d, dk))
    }

    pub fn d(&self) -> usize {
        self.wk.rows()
    }

    pub fn dk(&self) -> usize {
        self.wk.cols()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in [&self.wk, &self.wq] {
            m.shape().hash(&mut h);
            for v in m.as_slice() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Forward state consumed by [`attention_backward`]. Tied to the parameter
/// values it was computed with.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    features: DenseMatrix,
    weights: DenseMatrix,
    params_fingerprint: u64,
}

impl AttentionCache {
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// Unnormalized scores, for affinity supervision and pair ranking.
    pub raw: AffinityMatrix,
    /// Row-softmax of `raw`.
    pub weights: DenseMatrix,
    /// `weights × features`.
    pub out: DenseMatrix,
    pub cache: AttentionCache,
}

pub fn attention_forward(features: &DenseMatrix, params: &AttentionParams) -> Result<AttentionOutput> {
    let raw = affinity_dot(features, &params.wk, &params.wq)?;
    let weights = softmax_rows(raw.raw())?;
    let out = weights.matmul(features)?;
    Ok(AttentionOutput {
        raw,
        cache: AttentionCache {
            features: features.clone(),
            weights: weights.clone(),
            params_fingerprint: params.fingerprint(),
        },
        weights,
        out,
    })
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    pub d_features: DenseMatrix,
    pub d_wk: DenseMatrix,
    pub d_wq: DenseMatrix,
}

/// Gradients of `L_up + λ·L_aff`, given `d_out = ∂L_up/∂out` and
/// `d_raw_aff = ∂L_aff/∂raw`. Fails with a state error when `params` no
/// longer match the values the cache was built with.
pub fn attention_backward(
    cache: &AttentionCache,
    params: &AttentionParams,
    d_out: &DenseMatrix,
    d_raw_aff: Option<&DenseMatrix>,
    lambda: f64,
) -> Result<AttentionGrads> {
    if params.fingerprint() != cache.params_fingerprint {
        return Err(Error::State(
            "attention cache is stale: parameters changed since forward".into(),
        ));
    }
    let f = &cache.features;
    let n = f.rows();
    if d_out.shape() != f.shape() {
        return Err(Error::shape(format!(
            "output gradient {:?} does not match output {:?}",
            d_out.shape(),
            f.shape()
        )));
    }
    let d_weights = d_out.matmul_bt(f)?;
    let d_f_agg = cache.weights.matmul_at(d_out)?;
    let mut d_raw = softmax_rows_backward(&cache.weights, &d_weights)?;
    if let Some(g) = d_raw_aff {
        if g.shape() != (n, n) {
            return Err(Error::shape(format!(
                "affinity gradient {:?} does not match N={n}",
                g.shape()
            )));
        }
        if lambda != 0.0 {
            d_raw.add_scaled(g, lambda)?;
        }
    }
    let g = affinity_dot_backward(f, &params.wk, &params.wq, &d_raw)?;
    Ok(AttentionGrads {
        d_features: g.d_features.add(&d_f_agg)?,
        d_wk: g.d_wk,
        d_wq: g.d_wq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{mass_loss, LossConfig, Scope, TargetMatrix};
    use crate::numerics::grad_check;

    #[test]
    fn singleton() {
        let f = DenseMatrix::from_rows(&[[0.3, -1.2, 2.0]]).unwrap();
        let p = AttentionParams::init(3, 2, &mut RngStream::new(1)).unwrap();
        let o = attention_forward(&f, &p).unwrap();
        assert_eq!(o.weights.as_slice(), &[1.0]);
        assert!(o.out.max_abs_diff(&f).unwrap() < 1e-15);
    }

    #[test]
    fn zero_params_average_uniformly() {
        let f = RngStream::new(2).normal_matrix(5, 3, 1.0);
        let o = attention_forward(&f, &AttentionParams::zeros(3, 2).unwrap()).unwrap();
        assert!(o.weights.as_slice().iter().all(|&w| (w - 0.2).abs() < 1e-15));
        for c in 0..3 {
            let mean = (0..5).map(|r| f[(r, c)]).sum::<f64>() / 5.0;
            for r in 0..5 {
                assert!((o.out[(r, c)] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_pair() {
        // Identity projections scaled so that 1/√d_k cancels.
        let f = DenseMatrix::identity(2);
        let w = DenseMatrix::identity(2).scale(2f64.powf(0.25));
        let o = attention_forward(&f, &AttentionParams::new(w.clone(), w).unwrap()).unwrap();
        assert!(o.raw.raw().max_abs_diff(&DenseMatrix::identity(2)).unwrap() < 1e-14);
        let e = std::f64::consts::E;
        assert!((o.weights[(0, 0)] - e / (e + 1.0)).abs() < 1e-14);
        assert!((o.weights[(0, 0)] - 0.731).abs() < 1e-3);
        assert!((o.weights[(1, 0)] - 1.0 / (e + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn identity_projections_use_sqrt_dk_scale() {
        let eye = DenseMatrix::identity(2);
        let o = attention_forward(&eye, &AttentionParams::new(eye.clone(), eye.clone()).unwrap())
            .unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(o.raw.raw().max_abs_diff(&eye.scale(s)).unwrap() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = RngStream::new(3);
        let f = rng.normal_matrix(4, 3, 1.0);
        let p = AttentionParams::init(3, 2, &mut rng).unwrap();
        let o = attention_forward(&f, &p).unwrap();
        let g = attention_backward(&o.cache, &p, &DenseMatrix::zeros(4, 3), None, 0.01).unwrap();
        assert!(g.d_wk.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_wq.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lambda_ignores_affinity_gradient() {
        let mut rng = RngStream::new(4);
        let f = rng.normal_matrix(4, 3, 1.0);
        let p = AttentionParams::init(3, 2, &mut rng).unwrap();
        let d_out = rng.normal_matrix(4, 3, 1.0);
        let d_aff = rng.normal_matrix(4, 4, 10.0);
        let o = attention_forward(&f, &p).unwrap();
        let plain = attention_backward(&o.cache, &p, &d_out, None, 0.0).unwrap();
        let off = attention_backward(&o.cache, &p, &d_out, Some(&d_aff), 0.0).unwrap();
        assert_eq!(plain.d_wk, off.d_wk);
        assert_eq!(plain.d_wq, off.d_wq);
        assert_eq!(plain.d_features, off.d_features);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = RngStream::new(5);
        let f = rng.normal_matrix(3, 2, 1.0);
        let mut p = AttentionParams::init(2, 2, &mut rng).unwrap();
        let o = attention_forward(&f, &p).unwrap();
        p.wk[(0, 0)] += 1e-3;
        let res = attention_backward(&o.cache, &p, &DenseMatrix::zeros(3, 2), None, 0.0);
        assert!(matches!(res, Err(Error::State(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let f = DenseMatrix::zeros(3, 4);
        assert!(attention_forward(&f, &AttentionParams::zeros(3, 2).unwrap()).is_err());
    }

    /// `loss = focal mass over raw + sum(out)` against finite differences.
    fn end_to_end_error(seed: u64) -> f64 {
        let mut rng = RngStream::new(seed);
        let (n, d, dk) = (4, 3, 2);
        let f = rng.normal_matrix(n, d, 1.0);
        let p = AttentionParams::init(d, dk, &mut rng).unwrap();
        let mut pairs = Vec::new();
        while pairs.is_empty() {
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.uniform() < 0.3 {
                        pairs.push((i, j));
                    }
                }
            }
        }
        let t = TargetMatrix::from_pairs(n, &pairs, false).unwrap();
        let cfg = LossConfig::focal(2.0, 0.5).with_scope(Scope::MatrixWise);

        let loss = |f: &DenseMatrix, p: &AttentionParams| -> Result<f64> {
            let o = attention_forward(f, p)?;
            Ok(o.out.sum() + cfg.lambda * mass_loss(&o.raw, &t, &cfg)?.loss)
        };
        let o = attention_forward(&f, &p).unwrap();
        let aff = mass_loss(&o.raw, &t, &cfg).unwrap();
        let g = attention_backward(
            &o.cache,
            &p,
            &DenseMatrix::ones(n, d),
            Some(&aff.grad_raw),
            cfg.lambda,
        )
        .unwrap();

        let e_f = grad_check(|x| loss(x, &p), &g.d_features, &f, 1e-5).unwrap();
        let e_k = grad_check(
            |x| loss(&f, &AttentionParams::new(x.clone(), p.wq.clone())?),
            &g.d_wk,
            &p.wk,
            1e-5,
        )
        .unwrap();
        let e_q = grad_check(
            |x| loss(&f, &AttentionParams::new(p.wk.clone(), x.clone())?),
            &g.d_wq,
            &p.wq,
            1e-5,
        )
        .unwrap();
        e_f.max(e_k).max(e_q)
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        for seed in 0..20 {
            let err = end_to_end_error(seed);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn outputs_are_convex_combinations() {
        let mut rng = RngStream::new(6);
        let f = rng.normal_matrix(6, 4, 2.0);
        let p = AttentionParams::init(4, 3, &mut rng).unwrap();
        let o = attention_forward(&f, &p).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..6).map(|r| f[(r, c)]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in 0..6 {
                assert!(o.out[(r, c)] >= lo - 1e-12 && o.out[(r, c)] <= hi + 1e-12);
            }
        }
    }
}
