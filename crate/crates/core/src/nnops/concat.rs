use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Stack `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::ShapeMismatch {
            op: "concat_channels",
            left: sa,
            right: sb,
        });
    }
    let out_shape = sa.with_channels(sa.c + sb.c);
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor::new(out_shape, data)
}

/// Channels `start..start + len`.
pub fn slice_channels(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let s = x.shape();
    if len == 0 || start + len > s.c {
        return Err(Error::InvalidConfig(format!(
            "channel slice {start}..{} out of range for {s}",
            start + len
        )));
    }
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.n * len * plane);
    for n in 0..s.n {
        let off = (n * s.c + start) * plane;
        data.extend_from_slice(&x.data()[off..off + len * plane]);
    }
    Tensor::new(s.with_channels(len), data)
}

#[derive(Debug, Clone, Copy)]
pub struct Concat;

impl Operator for Concat {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        concat_channels(inputs[0], inputs[1])
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let ca = inputs[0].shape().c;
        let cb = inputs[1].shape().c;
        let ga = if needs[0] { Some(slice_channels(grad, 0, ca)?) } else { None };
        let gb = if needs[1] { Some(slice_channels(grad, ca, cb)?) } else { None };
        Ok(vec![ga, gb])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SliceChannels {
    pub start: usize,
    pub len: usize,
}

impl Operator for SliceChannels {
    fn name(&self) -> &'static str {
        "slice_channels"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        slice_channels(inputs[0], self.start, self.len)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let s: Shape = inputs[0].shape();
        let plane = s.plane();
        let mut dx = Tensor::zeros(s);
        for n in 0..s.n {
            let src = &grad.data()[n * self.len * plane..(n + 1) * self.len * plane];
            let off = (n * s.c + self.start) * plane;
            dx.data_mut()[off..off + self.len * plane].copy_from_slice(src);
        }
        Ok(vec![Some(dx)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_add_up_and_slices_recover_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Tensor::randn(Shape::new(2, 2, 4, 4).unwrap(), 1.0, &mut rng);
        let b = Tensor::randn(Shape::new(2, 3, 4, 4).unwrap(), 1.0, &mut rng);
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 5, 4, 4).unwrap());
        assert_eq!(slice_channels(&y, 0, 2).unwrap(), a);
        assert_eq!(slice_channels(&y, 2, 3).unwrap(), b);
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = Tensor::zeros(Shape::new(1, 2, 4, 4).unwrap());
        let b = Tensor::zeros(Shape::new(1, 2, 4, 2).unwrap());
        assert!(concat_channels(&a, &b).is_err());
    }

    #[test]
    fn empty_slice_rejected() {
        let a = Tensor::zeros(Shape::new(1, 2, 4, 4).unwrap());
        assert!(slice_channels(&a, 1, 0).is_err());
        assert!(slice_channels(&a, 1, 2).is_err());
    }
}
