//! Momentum SGD with L2 weight decay folded into the velocity.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::srnet::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// `v = momentum * v + grad + wd * param; param -= lr * v`. Pass `decay =
/// false` for biases and BN shifts.
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, velocity: &mut Tensor, cfg: &SgdConfig, decay: bool) -> Result<()> {
    for other in [grad.shape(), velocity.shape()] {
        if other != param.shape() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                left: param.shape(),
                right: other,
            });
        }
    }
    let wd = if decay { cfg.weight_decay } else { 0.0 };
    let v = velocity.data_mut();
    for ((p, &g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(v) {
        *v = cfg.momentum * *v + g + wd * *p;
        *p -= cfg.lr * *v;
    }
    Ok(())
}

/// Optimizer state: one velocity buffer per named parameter.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdConfig,
    velocity: BTreeMap<String, Tensor>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Self {
        Sgd {
            cfg,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor> {
        self.velocity.get(name)
    }

    /// Update every parameter that has a gradient in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, grad) in grads {
            let entry = params
                .get_mut(name)
                .ok_or_else(|| Error::InvalidConfig(format!("gradient for unknown parameter `{name}`")))?;
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(entry.value.shape()));
            sgd_step(&mut entry.value, grad, v, &self.cfg, entry.decay)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn vanilla_step() {
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut p = t(1.0);
        sgd_step(&mut p, &t(2.0), &mut t(0.0), &cfg, true).unwrap();
        assert_eq!(p.data()[0], 1.0 - 0.1 * 2.0);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let cfg = SgdConfig {
            weight_decay: 0.0,
            ..SgdConfig::default()
        };
        let mut p = t(3.5);
        let mut v = t(0.0);
        sgd_step(&mut p, &t(0.0), &mut v, &cfg, true).unwrap();
        assert_eq!(p.data()[0], 3.5);
    }

    #[test]
    fn quadratic_recurrence() {
        // f(p) = p^2 / 2, so grad = p
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.01,
        };
        let mut p = t(1.0);
        let mut v = t(0.0);
        for _ in 0..2 {
            let g = p.clone();
            sgd_step(&mut p, &g, &mut v, &cfg, true).unwrap();
        }
        let v1 = 1.0 + 0.01 * 1.0;
        let p1 = 1.0 - 0.1 * v1;
        let v2 = 0.9 * v1 + p1 + 0.01 * p1;
        let p2 = p1 - 0.1 * v2;
        assert_eq!(p.data()[0], p2);
        assert_eq!(v.data()[0], v2);
    }

    #[test]
    fn decay_skipped_when_disabled() {
        let mut p = t(1.0);
        sgd_step(&mut p, &t(0.0), &mut t(0.0), &SgdConfig::default(), false).unwrap();
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn shapes_checked() {
        let mut p = Tensor::zeros(crate::Shape::new(1, 2, 1, 1).unwrap());
        assert!(sgd_step(&mut p, &t(0.0), &mut t(0.0), &SgdConfig::default(), true).is_err());
    }
}
