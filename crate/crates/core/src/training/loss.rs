//! Class-balanced binary cross-entropy over two-channel probability maps.

use std::sync::Arc;

use crate::autograd::{NodeId, Operator, Tape};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Lower bound applied to probabilities inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;
/// Auto-mode weights are clamped into this interval.
pub const DELTA_RANGE: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMode {
    Fixed(f64),
    /// `delta = |Y-| / T` per image, clamped to [`DELTA_RANGE`].
    AutoPerImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub delta: DeltaMode,
    /// Divide by `T * batch` instead of returning the plain sum.
    pub normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            delta: DeltaMode::AutoPerImage,
            normalize: true,
        }
    }
}

impl LossConfig {
    /// Literal sum over pixels and images.
    pub fn sum(delta: DeltaMode) -> Self {
        LossConfig { delta, normalize: false }
    }

    pub fn validate(&self) -> Result<()> {
        if let DeltaMode::Fixed(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidConfig(format!("fixed delta {d} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Fails on the first value that is neither 0 nor 1.
pub fn check_binary(mask: &Tensor) -> Result<()> {
    match mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::NonBinaryMask(v)),
        None => Ok(()),
    }
}

/// Positive-class weight for one image's mask plane.
pub fn balance_weight(mask: &[f64], mode: DeltaMode) -> f64 {
    match mode {
        DeltaMode::Fixed(d) => d,
        DeltaMode::AutoPerImage => {
            let negatives = mask.iter().filter(|&&v| v == 0.0).count();
            (negatives as f64 / mask.len() as f64).clamp(DELTA_RANGE.0, DELTA_RANGE.1)
        }
    }
}

fn check_inputs(probs: &Tensor, mask: &Tensor) -> Result<()> {
    let (p, m) = (probs.shape(), mask.shape());
    if p.c != 2 {
        return Err(Error::ChannelCount {
            op: "balanced_bce_loss",
            expected: 2,
            got: p.c,
        });
    }
    if m.c != 1 || (p.n, p.h, p.w) != (m.n, m.h, m.w) {
        return Err(Error::ShapeMismatch {
            op: "balanced_bce_loss",
            left: p,
            right: m,
        });
    }
    check_binary(mask)
}

fn scale_factor(shape: Shape, cfg: &LossConfig) -> f64 {
    if cfg.normalize {
        1.0 / (shape.n * shape.plane()) as f64
    } else {
        1.0
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `-delta * sum_{Y+} log p1 - (1 - delta) * sum_{Y-} log p0`, summed over
/// the batch and optionally normalized.
///
/// The reduction is compensated so that nearby inputs give losses whose
/// difference is not swamped by summation rounding.
pub fn balanced_bce_loss(probs: &Tensor, mask: &Tensor, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    check_inputs(probs, mask)?;
    let s = probs.shape();
    let mut total = CompensatedSum::default();
    for n in 0..s.n {
        let m = mask.channel(n, 0);
        let delta = balance_weight(m, cfg.delta);
        let (p0, p1) = (probs.channel(n, 0), probs.channel(n, 1));
        for k in 0..m.len() {
            total.add(if m[k] == 1.0 {
                -delta * p1[k].max(LOG_FLOOR).ln()
            } else {
                -(1.0 - delta) * p0[k].max(LOG_FLOOR).ln()
            });
        }
    }
    Ok(total.value() * scale_factor(s, cfg))
}

/// Tape operator for [`balanced_bce_loss`]; input `[probs]`.
#[derive(Debug, Clone)]
pub struct BalancedBce {
    pub mask: Arc<Tensor>,
    pub cfg: LossConfig,
}

impl Operator for BalancedBce {
    fn name(&self) -> &'static str {
        "balanced_bce"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(Tensor::scalar(balanced_bce_loss(inputs[0], &self.mask, &self.cfg)?))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let probs = inputs[0];
        let s = probs.shape();
        let g = grad.data()[0] * scale_factor(s, &self.cfg);
        let mut dp = Tensor::zeros(s);
        let plane = s.plane();
        for n in 0..s.n {
            let m = self.mask.channel(n, 0);
            let delta = balance_weight(m, self.cfg.delta);
            for k in 0..plane {
                let (c, w) = if m[k] == 1.0 { (1, delta) } else { (0, 1.0 - delta) };
                let idx = (n * 2 + c) * plane + k;
                let p = probs.data()[idx];
                if p > LOG_FLOOR {
                    dp.data_mut()[idx] = -g * w / p;
                }
            }
        }
        Ok(vec![Some(dp)])
    }
}

impl Tape {
    pub fn balanced_bce(&mut self, probs: NodeId, mask: Tensor, cfg: LossConfig) -> Result<NodeId> {
        cfg.validate()?;
        check_inputs(self.value(probs), &mask)?;
        self.apply(
            BalancedBce {
                mask: Arc::new(mask),
                cfg,
            },
            &[probs],
        )
    }
}
