//! Unified 2-D convolution: standard, grouped, depth-wise and dilated.
//!
//! Each group is lowered to an im2col matrix and multiplied with the group's
//! weight rows. Pointwise convolutions with unit stride skip the lowering and
//! read the input planes directly.

use crate::autograd::Operator;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Dense square convolution, stride 1, no padding, no bias.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
            has_bias: false,
        }
    }

    /// 3x3 depth-wise convolution that preserves resolution (`pad = dilation`).
    pub fn depthwise(channels: usize, dilation: usize) -> Self {
        ConvSpec {
            padding: dilation,
            dilation,
            groups: channels,
            ..ConvSpec::new(channels, channels, 3)
        }
    }

    /// 1x1 (optionally grouped) convolution.
    pub fn pointwise(in_channels: usize, out_channels: usize, groups: usize) -> Self {
        ConvSpec {
            groups,
            ..ConvSpec::new(in_channels, out_channels, 1)
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConv(m));
        if self.in_channels == 0 || self.out_channels == 0 || self.groups == 0 {
            return bad(format!("channel and group counts must be positive: {self:?}"));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return bad("kernel must be at least 1x1".into());
        }
        if self.stride == 0 || self.dilation == 0 {
            return bad("stride and dilation must be at least 1".into());
        }
        if self.in_channels % self.groups != 0 {
            return Err(Error::divisibility("conv in_channels", self.in_channels, self.groups));
        }
        if self.out_channels % self.groups != 0 {
            return Err(Error::divisibility("conv out_channels", self.out_channels, self.groups));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape {
        Shape {
            n: self.out_channels,
            c: self.in_per_group(),
            h: self.kernel.0,
            w: self.kernel.1,
        }
    }

    pub fn bias_shape(&self) -> Shape {
        Shape {
            n: 1,
            c: self.out_channels,
            h: 1,
            w: 1,
        }
    }

    /// `floor((size + 2 pad - dilation (k - 1) - 1) / stride) + 1`, or an
    /// error when that is not positive.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |size: usize, k: usize| -> Result<usize> {
            let span = self.dilation * (k - 1) + 1;
            let padded = size + 2 * self.padding;
            if padded < span {
                return Err(Error::InvalidConv(format!(
                    "input extent {size} with padding {} is smaller than the dilated kernel extent {span}",
                    self.padding
                )));
            }
            Ok((padded - span) / self.stride + 1)
        };
        Ok((axis(h, self.kernel.0)?, axis(w, self.kernel.1)?))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::ChannelCount {
                op: "conv2d",
                expected: self.in_channels,
                got: input.c,
            });
        }
        let (h, w) = self.output_size(input.h, input.w)?;
        Ok(Shape {
            n: input.n,
            c: self.out_channels,
            h,
            w,
        })
    }

    pub fn param_count(&self) -> u64 {
        let w = (self.out_channels * self.in_per_group() * self.kernel.0 * self.kernel.1) as u64;
        w + if self.has_bias { self.out_channels as u64 } else { 0 }
    }

    /// Multiply-accumulates for one forward pass producing `output`.
    pub fn mult_adds(&self, output: Shape) -> u64 {
        output.numel() as u64 * (self.in_per_group() * self.kernel.0 * self.kernel.1) as u64
    }

    fn is_direct_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == 1 && self.padding == 0
    }
}

/// `c = alpha * a * b + beta * c` for row/column strided matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_row_stride: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * a_strides.0 + (k - 1) * a_strides.1);
    assert!(k == 0 || b.len() > (k - 1) * b_strides.0 + (n - 1) * b_strides.1);
    assert!(c.len() > (m - 1) * c_row_stride + (n - 1));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_row_stride as isize,
            1,
        );
    }
}

struct Geometry {
    spec: ConvSpec,
    in_shape: Shape,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(spec: &ConvSpec, in_shape: Shape) -> Result<Self> {
        let out = spec.output_shape(in_shape)?;
        Ok(Geometry {
            spec: *spec,
            in_shape,
            out_h: out.h,
            out_w: out.w,
        })
    }

    fn rows(&self) -> usize {
        self.spec.in_per_group() * self.spec.kernel.0 * self.spec.kernel.1
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Lower the input channels of one group of one batch item.
    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let s = &self.spec;
        let (h, w) = (self.in_shape.h as isize, self.in_shape.w as isize);
        let (kh, kw) = s.kernel;
        let plane = self.in_shape.plane();
        let cols = self.cols();
        for ci in 0..s.in_per_group() {
            let src = &x[ci * plane..(ci + 1) * plane];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let di = (ki * s.dilation) as isize - s.padding as isize;
                    let dj = (kj * s.dilation) as isize - s.padding as isize;
                    for oh in 0..self.out_h {
                        let ih = (oh * s.stride) as isize + di;
                        let out_row = &mut dst[oh * self.out_w..(oh + 1) * self.out_w];
                        if ih < 0 || ih >= h {
                            out_row.fill(0.0);
                            continue;
                        }
                        let src_row = &src[ih as usize * w as usize..];
                        for (ow, v) in out_row.iter_mut().enumerate() {
                            let iw = (ow * s.stride) as isize + dj;
                            *v = if iw < 0 || iw >= w { 0.0 } else { src_row[iw as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add a lowered gradient back onto the input planes.
    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let s = &self.spec;
        let (h, w) = (self.in_shape.h as isize, self.in_shape.w as isize);
        let (kh, kw) = s.kernel;
        let plane = self.in_shape.plane();
        let cols = self.cols();
        for ci in 0..s.in_per_group() {
            let dst = &mut dx[ci * plane..(ci + 1) * plane];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    let di = (ki * s.dilation) as isize - s.padding as isize;
                    let dj = (kj * s.dilation) as isize - s.padding as isize;
                    for oh in 0..self.out_h {
                        let ih = (oh * s.stride) as isize + di;
                        if ih < 0 || ih >= h {
                            continue;
                        }
                        let base = ih as usize * w as usize;
                        for ow in 0..self.out_w {
                            let iw = (ow * s.stride) as isize + dj;
                            if iw >= 0 && iw < w {
                                dst[base + iw as usize] += src[oh * self.out_w + ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_params(spec: &ConvSpec, weights: &Tensor, bias: Option<&Tensor>) -> Result<()> {
    if weights.shape() != spec.weight_shape() {
        return Err(Error::ShapeMismatch {
            op: "conv2d weights",
            left: spec.weight_shape(),
            right: weights.shape(),
        });
    }
    match (spec.has_bias, bias) {
        (true, Some(b)) if b.shape() == spec.bias_shape() => Ok(()),
        (true, Some(b)) => Err(Error::ShapeMismatch {
            op: "conv2d bias",
            left: spec.bias_shape(),
            right: b.shape(),
        }),
        (true, None) => Err(Error::InvalidConv("spec requires a bias tensor".into())),
        (false, Some(_)) => Err(Error::InvalidConv("bias given for a bias-free spec".into())),
        (false, None) => Ok(()),
    }
}

pub fn conv2d(x: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    check_params(spec, weights, bias)?;
    let geo = Geometry::new(spec, x.shape())?;
    let out_shape = spec.output_shape(x.shape())?;
    let mut out = Tensor::zeros(out_shape);

    let (rows, cols) = (geo.rows(), geo.cols());
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let in_plane = x.shape().plane();
    let mut col = if spec.is_direct_pointwise() { Vec::new() } else { vec![0.0; rows * cols] };

    for n in 0..x.shape().n {
        for g in 0..spec.groups {
            let x_off = (n * spec.in_channels + g * cin_g) * in_plane;
            let x_g = &x.data()[x_off..x_off + cin_g * in_plane];
            let b_mat: &[f64] = if spec.is_direct_pointwise() {
                x_g
            } else {
                geo.im2col(x_g, &mut col);
                &col
            };
            let w_g = &weights.data()[g * cout_g * rows..(g + 1) * cout_g * rows];
            let o_off = (n * spec.out_channels + g * cout_g) * cols;
            let o_g = &mut out.data_mut()[o_off..o_off + cout_g * cols];
            gemm(cout_g, rows, cols, w_g, (rows, 1), b_mat, (cols, 1), 0.0, o_g, cols);
        }
        if let Some(b) = bias {
            for o in 0..spec.out_channels {
                let off = (n * spec.out_channels + o) * cols;
                let bv = b.data()[o];
                out.data_mut()[off..off + cols].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to input, weights and bias.
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

pub fn conv2d_backward(
    x: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
    grad_out: &Tensor,
    need_input: bool,
) -> Result<ConvGrads> {
    let geo = Geometry::new(spec, x.shape())?;
    let (rows, cols) = (geo.rows(), geo.cols());
    let (cin_g, cout_g) = (spec.in_per_group(), spec.out_per_group());
    let in_plane = x.shape().plane();
    let direct = spec.is_direct_pointwise();

    let mut dw = Tensor::zeros(spec.weight_shape());
    let mut dx = need_input.then(|| Tensor::zeros(x.shape()));
    let mut col = if direct { Vec::new() } else { vec![0.0; rows * cols] };
    let mut dcol = if need_input && !direct { vec![0.0; rows * cols] } else { Vec::new() };

    for n in 0..x.shape().n {
        for g in 0..spec.groups {
            let x_off = (n * spec.in_channels + g * cin_g) * in_plane;
            let x_g = &x.data()[x_off..x_off + cin_g * in_plane];
            let b_mat: &[f64] = if direct {
                x_g
            } else {
                geo.im2col(x_g, &mut col);
                &col
            };
            let o_off = (n * spec.out_channels + g * cout_g) * cols;
            let go = &grad_out.data()[o_off..o_off + cout_g * cols];
            let w_range = g * cout_g * rows..(g + 1) * cout_g * rows;

            // dW_g += dOut_g * col^T
            gemm(cout_g, cols, rows, go, (cols, 1), b_mat, (1, cols), 1.0, &mut dw.data_mut()[w_range.clone()], rows);

            if let Some(dx) = dx.as_mut() {
                let w_g = &weights.data()[w_range];
                let dx_g = &mut dx.data_mut()[x_off..x_off + cin_g * in_plane];
                if direct {
                    // dX_g += W_g^T * dOut_g
                    gemm(rows, cout_g, cols, w_g, (1, rows), go, (cols, 1), 1.0, dx_g, cols);
                } else {
                    gemm(rows, cout_g, cols, w_g, (1, rows), go, (cols, 1), 0.0, &mut dcol, cols);
                    geo.col2im(&dcol, dx_g);
                }
            }
        }
    }

    let bias = spec.has_bias.then(|| {
        let mut db = Tensor::zeros(spec.bias_shape());
        for n in 0..grad_out.shape().n {
            for o in 0..spec.out_channels {
                db.data_mut()[o] += grad_out.channel(n, o).iter().sum::<f64>();
            }
        }
        db
    });
    Ok(ConvGrads {
        input: dx,
        weights: dw,
        bias,
    })
}

/// Tape operator; inputs are `[x, weights]` or `[x, weights, bias]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub spec: ConvSpec,
}

impl Operator for Conv2d {
    fn name(&self) -> &'static str {
        if self.spec.is_depthwise() {
            "conv2d_depthwise"
        } else if self.spec.groups > 1 {
            "conv2d_grouped"
        } else {
            "conv2d"
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        conv2d(inputs[0], &self.spec, inputs[1], inputs.get(2).copied())
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let g = conv2d_backward(inputs[0], &self.spec, inputs[1], grad, needs[0])?;
        let mut out = vec![g.input, Some(g.weights)];
        if inputs.len() > 2 {
            out.push(g.bias);
        }
        Ok(out)
    }
}
