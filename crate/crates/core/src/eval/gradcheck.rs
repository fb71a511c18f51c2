use serde::Serialize;

use crate::affinity::{mass_loss, AffinityMatrix, LossConfig, LossForm, Scope, TargetMatrix};
use crate::error::Result;
use crate::numerics::{grad_check, DenseMatrix, RngStream};

/// One loss configuration checked against central differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckRow {
    pub form: LossForm,
    pub gamma: f64,
    pub scope: Scope,
    pub instances: usize,
    /// Worst `|numeric - analytic| / max(1, |analytic|)` over all instances.
    pub max_rel_err: f64,
}

/// Focal exponents exercised for [`LossForm::Focal`]; the other forms use
/// the first non-zero one.
pub const CHECK_GAMMAS: [f64; 3] = [0.0, 2.0, 5.0];
pub const CHECK_STEP: f64 = 1e-5;

fn configs() -> Vec<LossConfig> {
    let mut out = Vec::new();
    for scope in [Scope::MatrixWise, Scope::RowWise] {
        for form in LossForm::ALL {
            let gammas: &[f64] = if form == LossForm::Focal { &CHECK_GAMMAS } else { &CHECK_GAMMAS[1..2] };
            for &g in gammas {
                out.push(LossConfig::focal(g, 1.0).with_form(form).with_scope(scope));
            }
        }
    }
    out
}

/// Random `n × n` raw scores with a random non-empty off-diagonal target.
pub fn random_instance(n: usize, rng: &mut RngStream) -> Result<(DenseMatrix, TargetMatrix)> {
    let raw = rng.normal_matrix(n, n, 1.0);
    let mut t = DenseMatrix::from_fn(n, n, |i, j| if i != j && rng.uniform() < 0.3 { 1.0 } else { 0.0 });
    if n > 1 && t.sum() == 0.0 {
        t.set(0, 1, 1.0);
    }
    Ok((raw, TargetMatrix::from_matrix(t)?))
}

/// Analytic vs numeric gradient of every loss form and softmax scope on
/// `instances` random `n × n` problems. All configurations see the same
/// instances.
pub fn mass_loss_gradcheck(instances: usize, n: usize, seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = RngStream::new(seed);
    let problems = (0..instances)
        .map(|_| random_instance(n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    configs()
        .into_iter()
        .map(|cfg| {
            let mut worst = 0.0f64;
            for (raw, t) in &problems {
                let analytic = mass_loss(&AffinityMatrix::from_raw(raw.clone())?, t, &cfg)?.grad_raw;
                let f = |x: &DenseMatrix| Ok(mass_loss(&AffinityMatrix::from_raw(x.clone())?, t, &cfg)?.loss);
                worst = worst.max(grad_check(f, &analytic, raw, CHECK_STEP)?);
            }
            Ok(GradCheckRow {
                form: cfg.form,
                gamma: cfg.gamma,
                scope: cfg.scope,
                instances,
                max_rel_err: worst,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covers_every_form_and_scope() {
        let rows = mass_loss_gradcheck(2, 4, 0).unwrap();
        // (4 forms + 3 focal gammas) x 2 scopes.
        assert_eq!(rows.len(), 14);
        assert!(rows.iter().all(|r| r.max_rel_err < 1e-6), "{rows:?}");
    }

    #[test]
    fn instances_always_have_a_target() {
        let mut rng = RngStream::new(3);
        for _ in 0..50 {
            let (_, t) = random_instance(2, &mut rng).unwrap();
            assert!(!t.is_empty());
        }
    }
}
