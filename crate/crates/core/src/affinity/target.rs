use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagPolicy {
    /// Self-pairs are never supervised.
    ZeroDiagonal,
    /// Keep whatever the caller put on the diagonal. Only meant for
    /// analysis; none of the builders use it.
    KeepDiagonal,
}

/// Binary `N×N` supervision target.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMatrix {
    entries: DenseMatrix,
    policy: DiagPolicy,
}

impl TargetMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DenseMatrix::zeros(n, n),
            policy: DiagPolicy::ZeroDiagonal,
        }
    }

    /// Builds a target from a 0/1 matrix, zeroing the diagonal.
    pub fn from_matrix(m: DenseMatrix) -> Result<Self> {
        Self::with_policy(m, DiagPolicy::ZeroDiagonal)
    }

    pub fn with_policy(mut m: DenseMatrix, policy: DiagPolicy) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::shape(format!("target must be square, got {:?}", m.shape())));
        }
        if let Some(v) = m.as_slice().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::shape(format!("target entries must be 0 or 1, found {v}")));
        }
        if policy == DiagPolicy::ZeroDiagonal {
            for i in 0..m.rows() {
                m.set(i, i, 0.0);
            }
        }
        Ok(Self { entries: m, policy })
    }

    /// Target with ones at the listed `(i, j)` positions. Self-pairs are
    /// dropped. With `symmetric`, `(j, i)` is set as well.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)], symmetric: bool) -> Result<Self> {
        let mut t = Self::zeros(n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::shape(format!("pair ({i}, {j}) out of range for N={n}")));
            }
            if i == j {
                continue;
            }
            t.entries.set(i, j, 1.0);
            if symmetric {
                t.entries.set(j, i, 1.0);
            }
        }
        Ok(t)
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, on: bool) {
        if i == j && self.policy == DiagPolicy::ZeroDiagonal {
            return;
        }
        self.entries.set(i, j, if on { 1.0 } else { 0.0 });
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn policy(&self) -> DiagPolicy {
        self.policy
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries.get(i, j) != 0.0
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.entries
    }

    /// `|S|`, the number of selected entries.
    pub fn selected_count(&self) -> usize {
        self.entries.as_slice().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_count() == 0
    }

    pub fn row_has_target(&self, i: usize) -> bool {
        self.entries.row(i).iter().any(|&v| v != 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Selected `(i, j)` positions in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Selected unordered pairs `(i, j)` with `i < j`, taking the union of
    /// both directions.
    pub fn unordered_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.get(i, j) || self.get(j, i) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Entrywise `self >= other`.
    pub fn contains(&self, other: &TargetMatrix) -> bool {
        self.n() == other.n()
            && self
                .entries
                .as_slice()
                .iter()
                .zip(other.entries.as_slice())
                .all(|(a, b)| a >= b)
    }
}
