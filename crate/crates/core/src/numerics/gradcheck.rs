//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const MIN_STEP: f64 = 1e-7;
pub const MAX_STEP: f64 = 1e-3;

/// Central-difference estimate of `∇f(x)`.
pub fn numerical_gradient<F>(f: F, x: &DenseMatrix, step: f64) -> Result<DenseMatrix>
where
    F: Fn(&DenseMatrix) -> Result<f64>,
{
    if !(MIN_STEP..=MAX_STEP).contains(&step) {
        return Err(Error::config(format!(
            "finite-difference step {step} outside [{MIN_STEP}, {MAX_STEP}]"
        )));
    }
    let mut probe = x.clone();
    let mut grad = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.as_slice().len() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let plus = f(&probe)?;
        probe.as_mut_slice()[i] = orig - step;
        let minus = f(&probe)?;
        probe.as_mut_slice()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective not finite when probing entry {i}"
            )));
        }
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Max over entries of `|numeric - analytic| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, analytic: &DenseMatrix, x: &DenseMatrix, step: f64) -> Result<f64>
where
    F: Fn(&DenseMatrix) -> Result<f64>,
{
    if analytic.shape() != x.shape() {
        return Err(Error::shape(format!(
            "analytic gradient {:?} vs point {:?}",
            analytic.shape(),
            x.shape()
        )));
    }
    let numeric = numerical_gradient(f, x, step)?;
    Ok(numeric
        .as_slice()
        .iter()
        .zip(analytic.as_slice())
        .map(|(n, a)| (n - a).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn linear_function() {
        let x = RngStream::new(1).normal_matrix(4, 5, 1.0);
        let err = grad_check(|m| Ok(m.sum()), &DenseMatrix::ones(4, 5), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn half_squared_norm() {
        let x = RngStream::new(2).normal_matrix(3, 3, 2.0);
        let f = |m: &DenseMatrix| Ok(0.5 * m.as_slice().iter().map(|v| v * v).sum::<f64>());
        let err = grad_check(f, &x, &x, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = RngStream::new(3).normal_matrix(2, 2, 1.0);
        let err = grad_check(|m| Ok(m.sum()), &DenseMatrix::zeros(2, 2), &x, 1e-5).unwrap();
        assert!(err > 0.9);
    }

    #[test]
    fn step_out_of_range_rejected() {
        let x = DenseMatrix::zeros(1, 1);
        assert!(matches!(
            grad_check(|m| Ok(m.sum()), &x, &x, 1e-2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_objective_is_numeric_error() {
        let x = DenseMatrix::zeros(1, 1);
        let res = grad_check(|m| Ok(m[(0, 0)].ln()), &x, &x, 1e-5);
        assert!(matches!(res, Err(Error::Numeric(_))));
    }
}
