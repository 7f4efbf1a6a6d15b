//! Finite-difference verification of every registered operator and of a
//! complete network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::gradcheck::{finite_diff_check_with, GradCheckOptions, GradCheckReport};
use crate::autograd::{NodeId, ParamGroup, Tape};
use crate::error::Result;
use crate::nnops::{BnMode, ConvSpec, RunningStats};
use crate::srnet::{build_network, AblationVariant, BackboneKind, Model, NetConfig};
use crate::tensor::{Shape, Tensor};
use crate::training::{DeltaMode, LossConfig};

/// Operators with an analytic adjoint, by [`crate::autograd::Operator::name`].
pub const REGISTERED_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "sum",
    "scale",
    "weighted_sum",
    "conv2d",
    "conv2d_grouped",
    "conv2d_depthwise",
    "relu",
    "channel_shuffle",
    "bilinear_upsample",
    "concat_channels",
    "slice_channels",
    "softmax2",
    "batch_norm_train",
    "batch_norm_eval",
    "balanced_bce",
];

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= TOLERANCE && self.report.checked > 0
    }
}

fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape { n, c, h, w }
}

struct Case<'a> {
    tape: Tape,
    rng: &'a mut ChaCha8Rng,
}

impl Case<'_> {
    fn param(&mut self, s: Shape) -> NodeId {
        let t = Tensor::randn(s, 1.0, self.rng);
        let name = format!("p{}", self.tape.parameter_ids().len());
        self.tape.parameter(name, ParamGroup::Reasoning, t)
    }

    /// Reduce `out` to a scalar through random weights.
    fn finish(mut self, out: NodeId) -> Result<(Tape, NodeId)> {
        let s = self.tape.value(out).shape();
        let loss = if s == Shape::scalar() {
            out
        } else {
            let w = Tensor::randn(s, 1.0, self.rng);
            self.tape.weighted_sum(out, w)?
        };
        Ok((self.tape, loss))
    }
}

fn conv_case(c: &mut Case, spec: ConvSpec, input: Shape) -> Result<NodeId> {
    let x = c.param(input);
    let w = c.param(spec.weight_shape());
    let b = if spec.has_bias { Some(c.param(spec.bias_shape())) } else { None };
    c.tape.conv2d(x, w, b, spec)
}

/// Build the probe graph for one operator.
fn build_case(name: &str, rng: &mut ChaCha8Rng) -> Result<(Tape, NodeId)> {
    let mut c = Case { tape: Tape::new(), rng };
    let s = shape(2, 4, 5, 5);
    let out = match name {
        "add" | "sub" | "mul" => {
            let (a, b) = (c.param(s), c.param(s));
            match name {
                "add" => c.tape.add(a, b)?,
                "sub" => c.tape.sub(a, b)?,
                _ => c.tape.mul(a, b)?,
            }
        }
        "sum" => {
            let a = c.param(s);
            let sq = c.tape.mul(a, a)?;
            c.tape.sum(sq)?
        }
        "scale" => {
            let a = c.param(s);
            c.tape.scale(a, -2.5)?
        }
        "weighted_sum" => c.param(s),
        "conv2d" => {
            let spec = ConvSpec::new(3, 4, 3).with_stride(2).with_padding(1).with_bias(true);
            conv_case(&mut c, spec, shape(2, 3, 7, 7))?
        }
        "conv2d_grouped" => {
            let spec = ConvSpec::new(8, 4, 3).with_padding(2).with_dilation(2).with_groups(4);
            conv_case(&mut c, spec, shape(2, 8, 6, 6))?
        }
        "conv2d_depthwise" => conv_case(&mut c, ConvSpec::depthwise(4, 2), shape(2, 4, 6, 6))?,
        "relu" => {
            let a = c.param(s);
            c.tape.relu(a)?
        }
        "channel_shuffle" => {
            let a = c.param(shape(1, 8, 3, 3));
            c.tape.channel_shuffle(a, 4)?
        }
        "bilinear_upsample" => {
            let a = c.param(shape(1, 2, 3, 4));
            c.tape.upsample(a, 2)?
        }
        "concat_channels" => {
            let (a, b) = (c.param(shape(1, 2, 3, 3)), c.param(shape(1, 3, 3, 3)));
            c.tape.concat(a, b)?
        }
        "slice_channels" => {
            let a = c.param(shape(1, 6, 3, 3));
            c.tape.slice_channels(a, 2, 3)?
        }
        "softmax2" => {
            let a = c.param(shape(2, 2, 3, 3));
            c.tape.softmax2(a)?
        }
        "batch_norm_train" | "batch_norm_eval" => {
            let x = c.param(s);
            let a = shape(1, 4, 1, 1);
            let (g, b) = (c.param(a), c.param(a));
            if name == "batch_norm_train" {
                c.tape.batch_norm_train(x, g, b)?
            } else {
                let stats = RunningStats {
                    mean: (0..4).map(|_| c.rng.random_range(-0.5..0.5)).collect(),
                    var: (0..4).map(|_| c.rng.random_range(0.5..2.0)).collect(),
                };
                c.tape.batch_norm_eval(x, g, b, &stats)?
            }
        }
        "balanced_bce" => {
            let logits = c.param(shape(2, 2, 4, 4));
            let probs = c.tape.softmax2(logits)?;
            let mask = Tensor::new(
                shape(2, 1, 4, 4),
                (0..32).map(|_| f64::from(u8::from(c.rng.random_bool(0.3)))).collect::<Vec<_>>(),
            )?;
            c.tape.balanced_bce(probs, mask, LossConfig::sum(DeltaMode::AutoPerImage))?
        }
        other => panic!("no gradient probe for `{other}`"),
    };
    c.finish(out)
}

/// Check each registered operator on a small random instance.
pub fn operator_checks(seed: u64, epsilon: f64) -> Result<Vec<OpCheck>> {
    let opts = GradCheckOptions {
        epsilon,
        max_coords_per_param: None,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    REGISTERED_OPS
        .iter()
        .map(|&name| {
            let (mut tape, loss) = build_case(name, &mut rng)?;
            let report = finite_diff_check_with(&mut tape, loss, &opts)?;
            Ok(OpCheck { name, report })
        })
        .collect()
}

/// Full-network check: train-mode forward of a desk-scale network on a
/// random `size x size` image with the pixel-normalized balanced loss,
/// sampling coordinates per parameter tensor.
///
/// Biases and BN shifts that feed a train-mode BN through a linear map have
/// an exact zero gradient, so their finite difference is pure rounding
/// noise of order `ulp(L) / 2 eps`. Keeping `L` of order one holds that
/// noise below the `1e-8` relative-error floor.
pub fn network_check(
    kind: BackboneKind,
    ablation: AblationVariant,
    size: usize,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let cfg = NetConfig {
        input_size: size,
        ..NetConfig::desk(kind, ablation)
    };
    let model = Model::new(build_network(&cfg)?, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = Tensor::rand_uniform(shape(1, 3, size, size), 0.0, 1.0, &mut rng);
    let mask = Tensor::new(
        shape(1, 1, size, size),
        (0..size * size)
            .map(|k| f64::from(u8::from((k / size) * 3 > size && (k % size) * 2 > size)))
            .collect::<Vec<_>>(),
    )?;
    let mut tape = Tape::new();
    let pass = model.record(&mut tape, x, BnMode::Train)?;
    let loss = tape.balanced_bce(pass.output, mask, LossConfig::default())?;
    finite_diff_check_with(&mut tape, loss, opts)
}
