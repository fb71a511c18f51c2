//! Softmax over the whole matrix and over each row, both stabilised by max
//! subtraction, plus the vector-Jacobian products used by backward passes.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Softmax over all entries jointly; the output sums to one.
pub fn softmax_matrix(w: &DenseMatrix) -> Result<DenseMatrix> {
    if w.is_empty() {
        return Err(Error::shape("softmax_matrix of an empty matrix"));
    }
    let max = w.max().expect("non-empty");
    let mut out = w.map(|v| (v - max).exp());
    let total: f64 = out.sum();
    out.scale_in_place(1.0 / total);
    Ok(out)
}

/// Softmax applied to each row independently; every row sums to one.
pub fn softmax_rows(w: &DenseMatrix) -> Result<DenseMatrix> {
    if w.cols() == 0 {
        return Err(Error::shape("softmax_rows over zero-width rows"));
    }
    let mut out = w.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Gradient w.r.t. the logits of a matrix-wise softmax, given the softmax
/// output `p` and the upstream gradient `g` on it:
/// `p_b (g_b - Σ_a g_a p_a)`.
pub fn softmax_matrix_backward(p: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    let inner: f64 = p
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    p.zip_with(g, "softmax_matrix_backward", |pv, gv| pv * (gv - inner))
}

/// Row-wise counterpart of [`softmax_matrix_backward`].
pub fn softmax_rows_backward(p: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    if p.shape() != g.shape() {
        return Err(Error::shape("softmax_rows_backward shape mismatch"));
    }
    let mut out = DenseMatrix::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        let pr = p.row(r);
        let gr = g.row(r);
        let inner: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for (o, (&pv, &gv)) in out.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
            *o = pv * (gv - inner);
        }
    }
    Ok(out)
}
