use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Scaled projected dot products,
/// `ω[m, n] = <f_m · W_K, f_n · W_Q> / √d_k` with features as rows.
pub fn affinity_dot(
    features: &DenseMatrix,
    wk: &DenseMatrix,
    wq: &DenseMatrix,
) -> Result<AffinityMatrix> {
    check_projection_shapes(features, wk, wq)?;
    let keys = features.matmul(wk)?;
    let queries = features.matmul(wq)?;
    let mut raw = keys.matmul_bt(&queries)?;
    raw.scale_in_place(1.0 / (wk.cols() as f64).sqrt());
    AffinityMatrix::from_raw(raw)
}

fn check_projection_shapes(f: &DenseMatrix, wk: &DenseMatrix, wq: &DenseMatrix) -> Result<()> {
    if wk.cols() == 0 {
        return Err(Error::shape("projection width d_k must be at least 1"));
    }
    if wk.shape() != wq.shape() {
        return Err(Error::shape(format!(
            "W_K {:?} and W_Q {:?} differ",
            wk.shape(),
            wq.shape()
        )));
    }
    if f.cols() != wk.rows() {
        return Err(Error::shape(format!(
            "features have {} columns, projections expect {}",
            f.cols(),
            wk.rows()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DotAffinityGrads {
    pub d_features: DenseMatrix,
    pub d_wk: DenseMatrix,
    pub d_wq: DenseMatrix,
}

/// Pulls a gradient on the raw dot-product scores back to the features and
/// both projections.
pub fn affinity_dot_backward(
    features: &DenseMatrix,
    wk: &DenseMatrix,
    wq: &DenseMatrix,
    grad_raw: &DenseMatrix,
) -> Result<DotAffinityGrads> {
    check_projection_shapes(features, wk, wq)?;
    let n = features.rows();
    if grad_raw.shape() != (n, n) {
        return Err(Error::shape(format!(
            "raw-score gradient {:?} does not match N={n}",
            grad_raw.shape()
        )));
    }
    let inv_scale = 1.0 / (wk.cols() as f64).sqrt();
    let keys = features.matmul(wk)?;
    let queries = features.matmul(wq)?;
    let mut d_keys = grad_raw.matmul(&queries)?;
    d_keys.scale_in_place(inv_scale);
    let mut d_queries = grad_raw.matmul_at(&keys)?;
    d_queries.scale_in_place(inv_scale);
    let d_wk = features.matmul_at(&d_keys)?;
    let d_wq = features.matmul_at(&d_queries)?;
    let d_features = d_keys
        .matmul_bt(wk)?
        .add(&d_queries.matmul_bt(wq)?)?;
    Ok(DotAffinityGrads {
        d_features,
        d_wk,
        d_wq,
    })
}

/// Negative half squared Euclidean distance between feature rows,
/// `ω[m, n] = -‖f_m - f_n‖² / 2`. Symmetric with a zero diagonal.
pub fn affinity_l2(features: &DenseMatrix) -> Result<AffinityMatrix> {
    if !features.is_finite() {
        return Err(Error::Numeric("affinity_l2 on non-finite features".into()));
    }
    let n = features.rows();
    let mut raw = DenseMatrix::zeros(n, n);
    for m in 0..n {
        for k in m + 1..n {
            let d2: f64 = features
                .row(m)
                .iter()
                .zip(features.row(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            raw.set(m, k, -0.5 * d2);
            raw.set(k, m, -0.5 * d2);
        }
    }
    raw.ensure_finite("affinity_l2")?;
    AffinityMatrix::from_raw(raw)
}

/// Gradient of a loss on [`affinity_l2`] scores w.r.t. the features:
/// `S·F - diag(rowsum S)·F` with `S = G + Gᵀ`.
pub fn affinity_l2_backward(features: &DenseMatrix, grad_raw: &DenseMatrix) -> Result<DenseMatrix> {
    let n = features.rows();
    if grad_raw.shape() != (n, n) {
        return Err(Error::shape(format!(
            "raw-score gradient {:?} does not match N={n}",
            grad_raw.shape()
        )));
    }
    let sym = grad_raw.add(&grad_raw.transpose())?;
    let mut out = sym.matmul(features)?;
    for (p, s) in sym.row_sums().into_iter().enumerate() {
        let f = features.row(p).to_vec();
        for (o, v) in out.row_mut(p).iter_mut().zip(f) {
            *o -= s * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, RngStream};

    #[test]
    fn orthonormal_features_with_identity_projections() {
        let dk = 4;
        let f = DenseMatrix::identity(dk);
        let eye = DenseMatrix::identity(dk);
        let a = affinity_dot(&f, &eye, &eye).unwrap();
        let expected = DenseMatrix::identity(dk).scale(1.0 / 2.0);
        assert!(a.raw().max_abs_diff(&expected).unwrap() < 1e-15);
        assert!(a.normalized().is_none());
    }

    #[test]
    fn unit_vector_pair_scores_one_half() {
        let mut f = DenseMatrix::zeros(2, 4);
        f.set(0, 0, 1.0);
        f.set(1, 0, 1.0);
        let eye = DenseMatrix::identity(4);
        let a = affinity_dot(&f, &eye, &eye).unwrap();
        assert!((a.raw()[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_features_give_zero_scores() {
        let f = DenseMatrix::zeros(3, 5);
        let w = RngStream::new(9).normal_matrix(5, 2, 1.0);
        let a = affinity_dot(&f, &w, &w).unwrap();
        assert!(a.raw().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dot_shape_errors() {
        let f = DenseMatrix::zeros(3, 5);
        assert!(affinity_dot(&f, &DenseMatrix::zeros(4, 2), &DenseMatrix::zeros(4, 2)).is_err());
        assert!(affinity_dot(&f, &DenseMatrix::zeros(5, 2), &DenseMatrix::zeros(5, 3)).is_err());
        assert!(affinity_dot(&f, &DenseMatrix::zeros(5, 0), &DenseMatrix::zeros(5, 0)).is_err());
    }

    #[test]
    fn l2_examples() {
        let same = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(affinity_l2(&same).unwrap().raw().as_slice().iter().all(|&v| v == 0.0));

        let pair = DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let a = affinity_l2(&pair).unwrap();
        assert_eq!(a.raw()[(0, 1)], -1.0);
        assert_eq!(a.raw()[(1, 0)], -1.0);

        let single = DenseMatrix::from_rows(&[[3.0, -4.0]]).unwrap();
        assert_eq!(affinity_l2(&single).unwrap().raw().as_slice(), &[0.0]);
    }

    #[test]
    fn l2_backward_matches_finite_differences() {
        let mut rng = RngStream::new(11);
        let f = rng.normal_matrix(5, 3, 1.0);
        let weights = rng.normal_matrix(5, 5, 1.0);
        let objective = |x: &DenseMatrix| {
            let raw = affinity_l2(x)?.into_raw();
            Ok(raw.hadamard(&weights)?.sum())
        };
        let analytic = affinity_l2_backward(&f, &weights).unwrap();
        assert!(grad_check(objective, &analytic, &f, 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn dot_backward_matches_finite_differences() {
        let mut rng = RngStream::new(12);
        let f = rng.normal_matrix(4, 3, 1.0);
        let wk = rng.normal_matrix(3, 2, 1.0);
        let wq = rng.normal_matrix(3, 2, 1.0);
        let weights = rng.normal_matrix(4, 4, 1.0);
        let g = affinity_dot_backward(&f, &wk, &wq, &weights).unwrap();
        let score = |f: &DenseMatrix, wk: &DenseMatrix, wq: &DenseMatrix| -> Result<f64> {
            affinity_dot(f, wk, wq)?.into_raw().hadamard(&weights).map(|m| m.sum())
        };
        assert!(grad_check(|x| score(x, &wk, &wq), &g.d_features, &f, 1e-5).unwrap() < 1e-7);
        assert!(grad_check(|x| score(&f, x, &wq), &g.d_wk, &wk, 1e-5).unwrap() < 1e-7);
        assert!(grad_check(|x| score(&f, &wk, x), &g.d_wq, &wq, 1e-5).unwrap() < 1e-7);
    }
}
