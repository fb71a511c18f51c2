//! Dense matrices, stable softmax variants, seeded random streams and a
//! finite-difference gradient checker.

mod gradcheck;
mod matrix;
mod rng;
mod softmax;

pub use gradcheck::{grad_check, numerical_gradient, MAX_STEP, MIN_STEP};
pub use matrix::{dot, DenseMatrix};
pub use rng::RngStream;
pub use softmax::{softmax_matrix, softmax_matrix_backward, softmax_rows, softmax_rows_backward};

use crate::error::{Error, Result};

/// Ordered, named collection of parameter-shaped matrices. Used both for
/// model parameters and for their gradients, which must share a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, DenseMatrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: DenseMatrix) {
        self.entries.push((name.into(), value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseMatrix> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn matrices(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.entries.iter().map(|(_, m)| m)
    }

    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.entries.iter_mut().map(|(_, m)| m)
    }

    /// Zero-filled set with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, m)| (n.clone(), DenseMatrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }

    /// Same names in the same order with the same shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((a, ma), (b, mb))| a == b && ma.shape() == mb.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().all(DenseMatrix::is_finite)
    }

    /// `self += alpha * other`, entry by entry.
    pub fn add_scaled(&mut self, other: &ParamSet, alpha: f64) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Shape("parameter sets differ in layout".into()));
        }
        for (a, b) in self.matrices_mut().zip(other.matrices()) {
            a.add_scaled(b, alpha)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for m in self.matrices_mut() {
            m.scale_in_place(alpha);
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl FromIterator<(String, DenseMatrix)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, DenseMatrix)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
