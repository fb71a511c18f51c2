//! Affinity graphs over a set of entities, the target affinity mass they
//! place on a supervision target, and the losses that push that mass up.
//!
//! Raw pairwise scores `ω` are produced by [`affinity_dot`] (scaled
//! projected dot products) or [`affinity_l2`] (negative half squared
//! distance). [`target_mass`] normalizes them with a softmax (over the whole
//! matrix or per row) and sums the entries selected by a [`TargetMatrix`].
//! [`mass_loss`] turns that mass into a scalar loss and returns its gradient
//! with respect to the raw scores; chaining further upstream is left to
//! the caller.

mod combine;
mod functions;
mod mass;
mod target;

pub use combine::{combine_losses, Combined};
pub use functions::{
    affinity_dot, affinity_dot_backward, affinity_l2, affinity_l2_backward, DotAffinityGrads,
};
pub use mass::{focal_term, mass_loss, target_mass, MassLoss, MassReport};
pub use target::{DiagPolicy, TargetMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_matrix, softmax_rows, DenseMatrix};

/// Normalization domain of the softmax applied to raw scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// One softmax over all `N²` entries.
    MatrixWise,
    /// Independent softmax per row.
    RowWise,
}

impl Scope {
    pub fn apply(self, raw: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Scope::MatrixWise => softmax_matrix(raw),
            Scope::RowWise => softmax_rows(raw),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::MatrixWise => "matrix",
            Scope::RowWise => "row",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "matrix" | "matrix_wise" | "mat" => Ok(Scope::MatrixWise),
            "row" | "row_wise" => Ok(Scope::RowWise),
            other => Err(Error::config(format!("unknown softmax scope `{other}`"))),
        }
    }
}

/// Square matrix of raw affinity scores, optionally with its normalized
/// form.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    raw: DenseMatrix,
    normalized: Option<DenseMatrix>,
    scope: Scope,
}

impl AffinityMatrix {
    /// Wraps raw scores without normalizing them.
    pub fn from_raw(raw: DenseMatrix) -> Result<Self> {
        if !raw.is_square() || raw.is_empty() {
            return Err(Error::shape(format!(
                "affinity matrix must be square and non-empty, got {:?}",
                raw.shape()
            )));
        }
        Ok(Self {
            raw,
            normalized: None,
            scope: Scope::MatrixWise,
        })
    }

    /// Wraps raw scores and normalizes them under `scope`.
    pub fn normalized_from_raw(raw: DenseMatrix, scope: Scope) -> Result<Self> {
        Self::from_raw(raw)?.normalize(scope)
    }

    pub fn normalize(mut self, scope: Scope) -> Result<Self> {
        self.normalized = Some(scope.apply(&self.raw)?);
        self.scope = scope;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.raw.rows()
    }

    pub fn raw(&self) -> &DenseMatrix {
        &self.raw
    }

    pub fn normalized(&self) -> Option<&DenseMatrix> {
        self.normalized.as_ref()
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn into_raw(self) -> DenseMatrix {
        self.raw
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    L2,
    SmoothL1,
    Focal,
    RowFocal,
    EntryBce,
}

impl LossForm {
    pub const ALL: [LossForm; 5] = [
        LossForm::L2,
        LossForm::SmoothL1,
        LossForm::Focal,
        LossForm::RowFocal,
        LossForm::EntryBce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossForm::L2 => "l2",
            LossForm::SmoothL1 => "smooth_l1",
            LossForm::Focal => "focal",
            LossForm::RowFocal => "row_focal",
            LossForm::EntryBce => "entry_bce",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "l2" => Ok(LossForm::L2),
            "smooth_l1" | "smoothl1" => Ok(LossForm::SmoothL1),
            "focal" => Ok(LossForm::Focal),
            "row_focal" | "rowfocal" => Ok(LossForm::RowFocal),
            "entry_bce" | "bce" => Ok(LossForm::EntryBce),
            other => Err(Error::config(format!("unknown loss form `{other}`"))),
        }
    }

    /// Forms that take `log M` and are undefined on an empty target.
    pub fn is_log_based(self) -> bool {
        matches!(self, LossForm::Focal | LossForm::RowFocal)
    }
}

/// Affinity loss settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub form: LossForm,
    /// Focal exponent γ.
    pub gamma: f64,
    /// Weight λ of the affinity loss in the total loss.
    pub lambda: f64,
    /// Lower clamp for the argument of `log`.
    pub mass_floor: f64,
    pub scope: Scope,
    /// Divide the entry-wise BCE by `N²`.
    pub bce_normalize: bool,
}

impl LossConfig {
    pub const DEFAULT_MASS_FLOOR: f64 = 1e-12;

    pub fn focal(gamma: f64, lambda: f64) -> Self {
        Self {
            form: LossForm::Focal,
            gamma,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_form(mut self, form: LossForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.mass_floor > 0.0 && self.mass_floor <= 1e-6) {
            return Err(Error::config(format!(
                "mass_floor must lie in (0, 1e-6], got {}",
                self.mass_floor
            )));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            form: LossForm::Focal,
            gamma: 2.0,
            lambda: 0.01,
            mass_floor: Self::DEFAULT_MASS_FLOOR,
            scope: Scope::MatrixWise,
            bce_normalize: true,
        }
    }
}
