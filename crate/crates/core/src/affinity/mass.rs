use std::borrow::Cow;

use serde::Serialize;

use crate::affinity::{AffinityMatrix, LossConfig, LossForm, Scope, TargetMatrix};
use crate::error::{Error, Result};
use crate::numerics::{softmax_matrix_backward, softmax_rows_backward, DenseMatrix};

/// Target affinity mass of a normalized affinity matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassReport {
    /// `M`. Under row scope, the mean of the supervised row masses.
    pub mass: f64,
    /// `(row, M_i)` for every row holding at least one target entry.
    /// Filled under row scope only.
    pub row_masses: Option<Vec<(usize, f64)>>,
    /// `|S|`.
    pub selected_count: usize,
}

/// Loss value, its gradient w.r.t. the raw scores, and the mass it was
/// computed from.
#[derive(Clone, Debug)]
pub struct MassLoss {
    pub loss: f64,
    pub grad_raw: DenseMatrix,
    pub report: MassReport,
}

fn check_shapes(w: &AffinityMatrix, t: &TargetMatrix) -> Result<()> {
    if w.n() != t.n() {
        return Err(Error::shape(format!(
            "affinity is {0}x{0} but target is {1}x{1}",
            w.n(),
            t.n()
        )));
    }
    Ok(())
}

/// Masses of the rows that hold at least one target entry.
fn supervised_row_masses(normalized: &DenseMatrix, t: &TargetMatrix) -> Vec<(usize, f64)> {
    let tm = t.as_matrix();
    (0..t.n())
        .filter(|&i| t.row_has_target(i))
        .map(|i| {
            let m = normalized
                .row(i)
                .iter()
                .zip(tm.row(i))
                .map(|(w, t)| w * t)
                .sum::<f64>();
            (i, m.clamp(0.0, 1.0))
        })
        .collect()
}

fn report_for(normalized: &DenseMatrix, scope: Scope, t: &TargetMatrix) -> MassReport {
    let selected_count = t.selected_count();
    match scope {
        Scope::MatrixWise => {
            let mass = normalized
                .as_slice()
                .iter()
                .zip(t.as_matrix().as_slice())
                .map(|(w, t)| w * t)
                .sum::<f64>()
                .clamp(0.0, 1.0);
            MassReport {
                mass,
                row_masses: None,
                selected_count,
            }
        }
        Scope::RowWise => {
            let rows = supervised_row_masses(normalized, t);
            let mass = if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|(_, m)| m).sum::<f64>() / rows.len() as f64
            };
            MassReport {
                mass,
                row_masses: Some(rows),
                selected_count,
            }
        }
    }
}

/// `M = Σ W̃ ⊙ T` for the affinity's own scope (matrix-wise if it carries
/// only raw scores).
pub fn target_mass(w: &AffinityMatrix, t: &TargetMatrix) -> Result<MassReport> {
    check_shapes(w, t)?;
    let normalized = match w.normalized() {
        Some(n) => Cow::Borrowed(n),
        None => Cow::Owned(w.scope().apply(w.raw())?),
    };
    Ok(report_for(&normalized, w.scope(), t))
}

/// Focal term `-(1-M)^γ log(max(M, floor))` and its derivative in `M`.
pub fn focal_term(mass: f64, gamma: f64, floor: f64) -> (f64, f64) {
    let x = (1.0 - mass).max(0.0);
    let clamped = mass.max(floor);
    let log_m = clamped.ln();
    let weight = x.powf(gamma);
    let value = -weight * log_m;
    let d_log = if mass > floor { 1.0 / mass } else { 0.0 };
    // d/dM of (1-M)^γ is -γ(1-M)^(γ-1); at x = 0 the product with log M
    // vanishes for every γ > 0.
    let d_weight_term = if gamma == 0.0 || x == 0.0 {
        0.0
    } else {
        gamma * x.powf(gamma - 1.0) * log_m
    };
    (value, d_weight_term - weight * d_log)
}

/// Loss value and derivative in `M` for the mass-based forms.
fn scalar_loss(form: LossForm, mass: f64, cfg: &LossConfig) -> (f64, f64) {
    let x = 1.0 - mass;
    match form {
        LossForm::L2 => (x * x, -2.0 * x),
        LossForm::SmoothL1 => {
            if x.abs() < 0.5 {
                (x * x, -2.0 * x)
            } else {
                (x.abs() - 0.25, -x.signum())
            }
        }
        LossForm::Focal | LossForm::RowFocal => focal_term(mass, cfg.gamma, cfg.mass_floor),
        LossForm::EntryBce => unreachable!("entry-wise BCE has no scalar mass loss"),
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn entry_bce(raw: &DenseMatrix, t: &TargetMatrix, normalize: bool) -> Result<(f64, DenseMatrix)> {
    let n = raw.rows();
    let norm = if normalize { (n * n) as f64 } else { 1.0 };
    let tm = t.as_matrix();
    let mut loss = 0.0;
    let mut grad = DenseMatrix::zeros(n, n);
    for ((g, &w), &tv) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(raw.as_slice())
        .zip(tm.as_slice())
    {
        // -log p = softplus(-w), -log(1-p) = softplus(w)
        loss += tv * softplus(-w) + (1.0 - tv) * softplus(w);
        let p = 1.0 / (1.0 + (-w).exp());
        *g = (p - tv) / norm;
    }
    Ok((loss / norm, grad))
}

/// Affinity loss for `cfg.form` with its gradient w.r.t. the raw scores of
/// `w`. The raw scores are normalized under `cfg.scope`; any normalized form
/// carried by `w` is ignored.
pub fn mass_loss(w: &AffinityMatrix, t: &TargetMatrix, cfg: &LossConfig) -> Result<MassLoss> {
    cfg.validate()?;
    check_shapes(w, t)?;
    if cfg.form.is_log_based() && t.is_empty() {
        return Err(Error::DegenerateTarget(format!(
            "{} loss needs at least one target entry",
            cfg.form.name()
        )));
    }
    let normalized = cfg.scope.apply(w.raw())?;
    let report = report_for(&normalized, cfg.scope, t);
    let n = t.n();
    let tm = t.as_matrix();

    // Gradient w.r.t. the normalized matrix.
    let (loss, grad_norm) = match cfg.form {
        LossForm::EntryBce => {
            let (loss, grad_raw) = entry_bce(w.raw(), t, cfg.bce_normalize)?;
            return Ok(MassLoss {
                loss,
                grad_raw,
                report,
            });
        }
        LossForm::RowFocal => {
            let rows = supervised_row_masses(&normalized, t);
            let mut loss = 0.0;
            let mut g = DenseMatrix::zeros(n, n);
            for (i, m) in rows {
                let (v, slope) = focal_term(m, cfg.gamma, cfg.mass_floor);
                loss += v;
                for (gv, &tv) in g.row_mut(i).iter_mut().zip(tm.row(i)) {
                    *gv = slope * tv;
                }
            }
            (loss, g)
        }
        form => {
            let (loss, slope) = scalar_loss(form, report.mass, cfg);
            let per_entry = match cfg.scope {
                Scope::MatrixWise => slope,
                Scope::RowWise => {
                    let rows = report.row_masses.as_ref().map_or(0, Vec::len);
                    if rows == 0 {
                        0.0
                    } else {
                        slope / rows as f64
                    }
                }
            };
            (loss, tm.scale(per_entry))
        }
    };

    let grad_raw = match cfg.scope {
        Scope::MatrixWise => softmax_matrix_backward(&normalized, &grad_norm)?,
        Scope::RowWise => softmax_rows_backward(&normalized, &grad_norm)?,
    };
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("{} loss is not finite", cfg.form.name())));
    }
    Ok(MassLoss {
        loss,
        grad_raw,
        report,
    })
}
