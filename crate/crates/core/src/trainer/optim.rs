use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamSet;

/// SGD with momentum and L2 weight decay, plus a step learning-rate
/// schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub base_lr: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(epoch, lr)`: from `epoch` on, use `lr`. Sorted by epoch.
    pub schedule: Vec<(usize, f64)>,
    #[serde(skip)]
    velocity: Option<ParamSet>,
}

impl OptimizerState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, mut schedule: Vec<(usize, f64)>) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        if let Some(&(e, bad)) = schedule.iter().find(|(_, l)| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::config(format!("schedule step at epoch {e} has lr {bad}")));
        }
        schedule.sort_by_key(|&(e, _)| e);
        Ok(Self {
            base_lr: lr,
            learning_rate: lr,
            momentum,
            weight_decay,
            schedule,
            velocity: None,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule
            .iter()
            .take_while(|&&(e, _)| e <= epoch)
            .last()
            .map_or(self.base_lr, |&(_, lr)| lr)
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.learning_rate = self.lr_at(epoch);
    }

    pub fn velocity(&self) -> Option<&ParamSet> {
        self.velocity.as_ref()
    }
}

/// `v ← μ·v + g + wd·p; p ← p − lr·v`. Non-finite gradients abort the
/// step before anything is modified.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState) -> Result<()> {
    if !params.same_layout(grads) {
        return Err(Error::shape("gradient layout differs from parameter layout"));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient, step aborted".into()));
    }
    let velocity = state.velocity.get_or_insert_with(|| params.zeros_like());
    if !velocity.same_layout(params) {
        return Err(Error::State("optimizer velocity belongs to another model".into()));
    }
    let (mu, wd, lr) = (state.momentum, state.weight_decay, state.learning_rate);
    for ((p, g), v) in params
        .matrices_mut()
        .zip(grads.matrices())
        .zip(velocity.matrices_mut())
    {
        for ((pv, gv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(v.as_mut_slice())
        {
            *vv = mu * *vv + gv + wd * *pv;
            *pv -= lr * *vv;
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters diverged to non-finite values".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", DenseMatrix::filled(1, 2, v));
        p
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = single(1.5);
        let mut s = OptimizerState::new(0.1, 0.9, 0.0, vec![]).unwrap();
        sgd_step(&mut p, &single(0.0), &mut s).unwrap();
        assert_eq!(p, single(1.5));
    }

    #[test]
    fn plain_gradient_descent() {
        let mut p = single(1.0);
        let mut s = OptimizerState::new(0.1, 0.0, 0.0, vec![]).unwrap();
        sgd_step(&mut p, &single(2.0), &mut s).unwrap();
        assert!((p.get("w").unwrap()[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_momentum_steps() {
        let (lr, g) = (0.1, 0.5);
        let mut p = single(0.0);
        let mut s = OptimizerState::new(lr, 0.9, 0.0, vec![]).unwrap();
        sgd_step(&mut p, &single(g), &mut s).unwrap();
        sgd_step(&mut p, &single(g), &mut s).unwrap();
        let moved = -p.get("w").unwrap()[(0, 0)];
        assert!((moved - lr * g * (1.0 + 1.9)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut p = single(2.0);
        let mut s = OptimizerState::new(0.5, 0.0, 0.1, vec![]).unwrap();
        sgd_step(&mut p, &single(0.0), &mut s).unwrap();
        assert!((p.get("w").unwrap()[(0, 0)] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_grad_aborts() {
        let mut p = single(1.0);
        let mut s = OptimizerState::new(0.1, 0.9, 0.0, vec![]).unwrap();
        let mut g = single(0.0);
        g.matrices_mut().next().unwrap().as_mut_slice()[1] = f64::NAN;
        assert!(matches!(sgd_step(&mut p, &g, &mut s), Err(Error::Numeric(_))));
        assert_eq!(p, single(1.0));
        assert!(s.velocity().is_none());
    }

    #[test]
    fn schedule_steps() {
        let s = OptimizerState::new(0.1, 0.9, 0.0, vec![(20, 0.001), (10, 0.01)]).unwrap();
        assert_eq!(s.lr_at(0), 0.1);
        assert_eq!(s.lr_at(9), 0.1);
        assert_eq!(s.lr_at(10), 0.01);
        assert_eq!(s.lr_at(25), 0.001);
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(OptimizerState::new(0.0, 0.9, 0.0, vec![]).is_err());
        assert!(OptimizerState::new(0.1, 1.0, 0.0, vec![]).is_err());
        assert!(OptimizerState::new(0.1, 0.5, -1.0, vec![]).is_err());
    }
}
