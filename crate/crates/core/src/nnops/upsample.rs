//! Bilinear upsampling by an integer factor, half-pixel (align-corners=false)
//! sampling.

use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Two source taps and the weight of the second one.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Source position `s = (t + 0.5) / factor - 0.5`, clamped to the valid range.
fn taps(size: usize, factor: usize) -> Vec<Tap> {
    (0..size * factor)
        .map(|t| {
            let s = ((t as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (size - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(size - 1);
            Tap { lo, hi, frac: s - lo as f64 }
        })
        .collect()
}

pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidConfig("upsample factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let s = x.shape();
    let out_shape = Shape {
        h: s.h * factor,
        w: s.w * factor,
        ..s
    };
    let (ty, tx) = (taps(s.h, factor), taps(s.w, factor));
    let mut out = Tensor::zeros(out_shape);
    let out_plane = out_shape.plane();
    for (p, src) in x.data().chunks_exact(s.plane()).enumerate() {
        let dst = &mut out.data_mut()[p * out_plane..(p + 1) * out_plane];
        for (oy, a) in ty.iter().enumerate() {
            let r0 = &src[a.lo * s.w..(a.lo + 1) * s.w];
            let r1 = &src[a.hi * s.w..(a.hi + 1) * s.w];
            for (ox, b) in tx.iter().enumerate() {
                let top = r0[b.lo] * (1.0 - b.frac) + r0[b.hi] * b.frac;
                let bottom = r1[b.lo] * (1.0 - b.frac) + r1[b.hi] * b.frac;
                dst[oy * out_shape.w + ox] = top * (1.0 - a.frac) + bottom * a.frac;
            }
        }
    }
    Ok(out)
}

/// Transpose of [`bilinear_upsample`]: scatter each output gradient back to
/// its four source taps.
pub fn bilinear_upsample_adjoint(grad: &Tensor, input: Shape, factor: usize) -> Tensor {
    if factor == 1 {
        return grad.clone();
    }
    let (ty, tx) = (taps(input.h, factor), taps(input.w, factor));
    let gs = grad.shape();
    let mut dx = Tensor::zeros(input);
    let plane = input.plane();
    for (p, g) in grad.data().chunks_exact(gs.plane()).enumerate() {
        let dst = &mut dx.data_mut()[p * plane..(p + 1) * plane];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = g[oy * gs.w + ox];
                let top = v * (1.0 - a.frac);
                let bottom = v * a.frac;
                dst[a.lo * input.w + b.lo] += top * (1.0 - b.frac);
                dst[a.lo * input.w + b.hi] += top * b.frac;
                dst[a.hi * input.w + b.lo] += bottom * (1.0 - b.frac);
                dst[a.hi * input.w + b.hi] += bottom * b.frac;
            }
        }
    }
    dx
}

#[derive(Debug, Clone, Copy)]
pub struct Upsample {
    pub factor: usize,
}

impl Operator for Upsample {
    fn name(&self) -> &'static str {
        "bilinear_upsample"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        bilinear_upsample(inputs[0], self.factor)
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(bilinear_upsample_adjoint(grad, inputs[0].shape(), self.factor))])
    }
}
