use crate::affinity::LossConfig;
use crate::error::{Error, Result};
use crate::numerics::ParamSet;

#[derive(Clone, Debug)]
pub struct Combined {
    pub total: f64,
    pub grads: ParamSet,
}

/// `L = L_main + λ·L_G`, with gradients merged the same way.
pub fn combine_losses(
    main_loss: f64,
    main_grads: &ParamSet,
    aff_loss: f64,
    aff_grads: &ParamSet,
    cfg: &LossConfig,
) -> Result<Combined> {
    cfg.validate()?;
    if !main_grads.same_layout(aff_grads) {
        return Err(Error::shape(
            "main and affinity gradients cover different parameter sets",
        ));
    }
    let mut grads = main_grads.clone();
    if cfg.lambda != 0.0 {
        for (g, a) in grads.matrices_mut().zip(aff_grads.matrices()) {
            g.add_scaled(a, cfg.lambda)?;
        }
    }
    Ok(Combined {
        total: main_loss + cfg.lambda * aff_loss,
        grads,
    })
}
