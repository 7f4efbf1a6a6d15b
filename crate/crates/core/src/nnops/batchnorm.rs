//! Per-channel batch normalization.
//!
//! Train mode standardizes by the statistics of the current batch (biased
//! variance, `eps = 1e-5`). Eval mode uses running statistics, which are
//! updated with momentum 0.1 from the unbiased batch variance.

use std::sync::Arc;

use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    /// Fold one batch's statistics in.
    pub fn update(&mut self, x: &Tensor) {
        let (mean, var) = batch_statistics(x);
        let count = (x.shape().n * x.shape().plane()) as f64;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for c in 0..mean.len() {
            self.mean[c] = (1.0 - BN_MOMENTUM) * self.mean[c] + BN_MOMENTUM * mean[c];
            self.var[c] = (1.0 - BN_MOMENTUM) * self.var[c] + BN_MOMENTUM * var[c] * unbias;
        }
    }
}

/// Per-channel mean and biased variance over `(n, h, w)`.
pub fn batch_statistics(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let s = x.shape();
    let count = (s.n * s.plane()) as f64;
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for c in 0..s.c {
        let sum: f64 = (0..s.n).map(|n| x.channel(n, c).iter().sum::<f64>()).sum();
        let m = sum / count;
        let sq: f64 = (0..s.n)
            .map(|n| x.channel(n, c).iter().map(|v| (v - m) * (v - m)).sum::<f64>())
            .sum();
        mean[c] = m;
        var[c] = sq / count;
    }
    (mean, var)
}

fn check_affine(x: Shape, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    let want = Shape {
        n: 1,
        c: x.c,
        h: 1,
        w: 1,
    };
    for t in [gamma, beta] {
        if t.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "batch_norm affine",
                left: want,
                right: t.shape(),
            });
        }
    }
    Ok(())
}

fn normalize(x: &Tensor, gamma: &Tensor, beta: &Tensor, mean: &[f64], var: &[f64]) -> Tensor {
    let s = x.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let inv = 1.0 / (var[c] + BN_EPS).sqrt();
            let (g, b, m) = (gamma.data()[c], beta.data()[c], mean[c]);
            let off = (n * s.c + c) * plane;
            let src = x.channel(n, c);
            for (o, &v) in out.data_mut()[off..off + plane].iter_mut().zip(src) {
                *o = g * (v - m) * inv + b;
            }
        }
    }
    out
}

/// Functional batch norm. In train mode `running` is updated in place.
pub fn batch_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, running: &mut RunningStats, mode: BnMode) -> Result<Tensor> {
    check_affine(x.shape(), gamma, beta)?;
    match mode {
        BnMode::Train => {
            let (mean, var) = batch_statistics(x);
            running.update(x);
            Ok(normalize(x, gamma, beta, &mean, &var))
        }
        BnMode::Eval => Ok(normalize(x, gamma, beta, &running.mean, &running.var)),
    }
}

/// Train-mode batch norm on the tape; inputs `[x, gamma, beta]`.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormTrain;

impl Operator for BatchNormTrain {
    fn name(&self) -> &'static str {
        "batch_norm_train"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        check_affine(inputs[0].shape(), inputs[1], inputs[2])?;
        let (mean, var) = batch_statistics(inputs[0]);
        Ok(normalize(inputs[0], inputs[1], inputs[2], &mean, &var))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let s = x.shape();
        let plane = s.plane();
        let count = (s.n * plane) as f64;
        let (mean, var) = batch_statistics(x);
        let mut dx = Tensor::zeros(s);
        let mut dgamma = Tensor::zeros(gamma.shape());
        let mut dbeta = Tensor::zeros(gamma.shape());
        for c in 0..s.c {
            let inv = 1.0 / (var[c] + BN_EPS).sqrt();
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for n in 0..s.n {
                for (&dy, &v) in grad.channel(n, c).iter().zip(x.channel(n, c)) {
                    sum_dy += dy;
                    sum_dy_xhat += dy * (v - mean[c]) * inv;
                }
            }
            dgamma.data_mut()[c] = sum_dy_xhat;
            dbeta.data_mut()[c] = sum_dy;
            if needs[0] {
                let k = gamma.data()[c] * inv / count;
                for n in 0..s.n {
                    let off = (n * s.c + c) * plane;
                    let gy = grad.channel(n, c);
                    let xs = x.channel(n, c);
                    for i in 0..plane {
                        let xhat = (xs[i] - mean[c]) * inv;
                        dx.data_mut()[off + i] = k * (count * gy[i] - sum_dy - xhat * sum_dy_xhat);
                    }
                }
            }
        }
        Ok(vec![needs[0].then_some(dx), Some(dgamma), Some(dbeta)])
    }
}

/// Eval-mode batch norm with frozen statistics; inputs `[x, gamma, beta]`.
#[derive(Debug, Clone)]
pub struct BatchNormEval {
    pub mean: Arc<Vec<f64>>,
    pub var: Arc<Vec<f64>>,
}

impl Operator for BatchNormEval {
    fn name(&self) -> &'static str {
        "batch_norm_eval"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        check_affine(inputs[0].shape(), inputs[1], inputs[2])?;
        Ok(normalize(inputs[0], inputs[1], inputs[2], &self.mean, &self.var))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let s = x.shape();
        let plane = s.plane();
        let mut dx = Tensor::zeros(s);
        let mut dgamma = Tensor::zeros(gamma.shape());
        let mut dbeta = Tensor::zeros(gamma.shape());
        for c in 0..s.c {
            let inv = 1.0 / (self.var[c] + BN_EPS).sqrt();
            for n in 0..s.n {
                let off = (n * s.c + c) * plane;
                for (i, (&dy, &v)) in grad.channel(n, c).iter().zip(x.channel(n, c)).enumerate() {
                    dgamma.data_mut()[c] += dy * (v - self.mean[c]) * inv;
                    dbeta.data_mut()[c] += dy;
                    dx.data_mut()[off + i] = dy * gamma.data()[c] * inv;
                }
            }
        }
        Ok(vec![Some(dx), Some(dgamma), Some(dbeta)])
    }
}
