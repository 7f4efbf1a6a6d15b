use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output index of input channel `k`: `(k mod g) * (C / g) + floor(k / g)`.
pub fn shuffle_index(k: usize, channels: usize, groups: usize) -> usize {
    (k % groups) * (channels / groups) + k / groups
}

fn check(channels: usize, groups: usize) -> Result<()> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::divisibility("channel_shuffle channels", channels, groups));
    }
    Ok(())
}

fn permute(x: &Tensor, groups: usize, inverse: bool) -> Tensor {
    let s = x.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for k in 0..s.c {
            let j = shuffle_index(k, s.c, groups);
            let (src, dst) = if inverse { (j, k) } else { (k, j) };
            let src_off = (n * s.c + src) * plane;
            let dst_off = (n * s.c + dst) * plane;
            out.data_mut()[dst_off..dst_off + plane].copy_from_slice(&x.data()[src_off..src_off + plane]);
        }
    }
    out
}

pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    check(x.shape().c, groups)?;
    Ok(permute(x, groups, false))
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelShuffle {
    pub groups: usize,
}

impl Operator for ChannelShuffle {
    fn name(&self) -> &'static str {
        "channel_shuffle"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        channel_shuffle(inputs[0], self.groups)
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(permute(grad, self.groups, true))])
    }
}
