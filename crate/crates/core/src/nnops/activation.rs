use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `max(0, x)`; the subgradient at exactly zero is zero.
#[derive(Debug, Clone, Copy)]
pub struct Relu;

impl Operator for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(relu(inputs[0]))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let mut g = grad.clone();
        for (gv, &x) in g.data_mut().iter_mut().zip(inputs[0].data()) {
            if x <= 0.0 {
                *gv = 0.0;
            }
        }
        Ok(vec![Some(g)])
    }

    fn kink_pattern(&self, inputs: &[&Tensor]) -> Option<Vec<bool>> {
        Some(inputs[0].data().iter().map(|&v| v > 0.0).collect())
    }
}

/// Per-pixel two-class softmax over channels (z0 = background, z1 = salient).
pub fn softmax2(logits: &Tensor) -> Result<Tensor> {
    let s = logits.shape();
    if s.c != 2 {
        return Err(Error::ChannelCount {
            op: "softmax2",
            expected: 2,
            got: s.c,
        });
    }
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let z0 = logits.channel(n, 0);
        let z1 = logits.channel(n, 1);
        let base = n * 2 * plane;
        let (p0, p1) = out.data_mut()[base..base + 2 * plane].split_at_mut(plane);
        for i in 0..plane {
            let m = z0[i].max(z1[i]);
            let e0 = (z0[i] - m).exp();
            let e1 = (z1[i] - m).exp();
            let total = e0 + e1;
            p0[i] = e0 / total;
            p1[i] = e1 / total;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct Softmax2;

impl Operator for Softmax2 {
    fn name(&self) -> &'static str {
        "softmax2"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        softmax2(inputs[0])
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let s = output.shape();
        let plane = s.plane();
        let mut dz = Tensor::zeros(s);
        for n in 0..s.n {
            let (p0, p1) = (output.channel(n, 0), output.channel(n, 1));
            let (g0, g1) = (grad.channel(n, 0), grad.channel(n, 1));
            let base = n * 2 * plane;
            let (d0, d1) = dz.data_mut()[base..base + 2 * plane].split_at_mut(plane);
            for i in 0..plane {
                let dot = p0[i] * g0[i] + p1[i] * g1[i];
                d0[i] = p0[i] * (g0[i] - dot);
                d1[i] = p1[i] * (g1[i] - dot);
            }
        }
        Ok(vec![Some(dz)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn relu_values() {
        let x = Tensor::new(Shape::new(1, 1, 1, 3).unwrap(), vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    fn logits(z0: f64, z1: f64) -> Tensor {
        Tensor::new(Shape::new(1, 2, 1, 1).unwrap(), vec![z0, z1]).unwrap()
    }

    #[test]
    fn equal_logits_give_half() {
        let p = softmax2(&logits(0.3, 0.3)).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
    }

    #[test]
    fn closed_form_quarter() {
        let p = softmax2(&logits(0.0, 3f64.ln())).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-15);
        assert!((p.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax2(&logits(0.0, 1000.0)).unwrap();
        assert!(p.all_finite());
        assert!(p.data()[0] < 1e-300);
        assert_eq!(p.data()[1], 1.0);
    }

    #[test]
    fn wrong_channel_count() {
        let x = Tensor::zeros(Shape::new(1, 3, 1, 1).unwrap());
        assert!(matches!(softmax2(&x), Err(Error::ChannelCount { got: 3, .. })));
    }
}
