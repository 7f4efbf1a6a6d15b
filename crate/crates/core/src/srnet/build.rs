//! Network assembly: toy backbone, hierarchical fusion, SR-units, the
//! reasoning stack and the classifier head.

use crate::error::{Error, Result};
use crate::nnops::ConvSpec;
use crate::srnet::config::{AblationVariant, NetConfig, ReasoningConfig, SRUnitConfig, FUSED_CHANNELS};
use crate::srnet::graph::{Component, GraphBuilder, LayerId, NetworkGraph};
use crate::tensor::Shape;

fn conv3x3(cin: usize, cout: usize, stride: usize, dilation: usize) -> ConvSpec {
    ConvSpec::new(cin, cout, 3)
        .with_stride(stride)
        .with_padding(dilation)
        .with_dilation(dilation)
}

/// Five conv-BN-ReLU x2 blocks whose first conv takes the stride step
/// between adjacent pyramid levels. Returns the pyramid taps S1..S5.
pub fn backbone(b: &mut GraphBuilder, x: LayerId, cfg: &NetConfig) -> Result<[LayerId; 5]> {
    let v = &cfg.backbone;
    let input = b.shape(x);
    if input.h % v.max_stride() != 0 || input.w % v.max_stride() != 0 {
        return Err(Error::divisibility("input size", input.h.max(input.w), v.max_stride()));
    }
    b.set_component(Component::Backbone);
    let mut taps = [0; 5];
    let mut prev_stride = 1;
    let mut cur = x;
    for level in 0..5 {
        let cin = b.shape(cur).c;
        let cout = cfg.scaled(v.pyramid_channels[level]);
        let step = v.pyramid_strides[level] / prev_stride;
        let dil = if level == 4 { v.top_dilation() } else { 1 };
        let name = format!("backbone.s{}", level + 1);
        cur = b.conv_bn(&format!("{name}.conv1"), cur, conv3x3(cin, cout, step, dil), true)?;
        cur = b.conv_bn(&format!("{name}.conv2"), cur, conv3x3(cout, cout, 1, dil), true)?;
        taps[level] = cur;
        prev_stride = v.pyramid_strides[level];
    }
    b.taps.pyramid = taps.to_vec();
    Ok(taps)
}

/// Lateral 1x1 reductions followed by a top-down pass of
/// `conv3x3(S_i ++ upsample(S_{i+1}))`; upsampling is skipped between
/// levels of equal stride. Returns the level-1 fused feature.
pub fn fuse_features(b: &mut GraphBuilder, pyramid: &[LayerId; 5], cfg: &NetConfig) -> Result<LayerId> {
    let v = &cfg.backbone;
    b.set_component(Component::Fusion);
    let lateral_widths = v.lateral_channels();
    let mut lateral = [0; 5];
    for level in 0..5 {
        let cin = b.shape(pyramid[level]).c;
        let cout = cfg.scaled(lateral_widths[level]);
        lateral[level] = b.conv_bn(
            &format!("fusion.lateral{}", level + 1),
            pyramid[level],
            ConvSpec::pointwise(cin, cout, 1),
            true,
        )?;
    }
    let fusion_widths = v.fusion_channels();
    let mut top = lateral[4];
    for level in (0..4).rev() {
        let factor = v.pyramid_strides[level + 1] / v.pyramid_strides[level];
        let up = if factor > 1 {
            b.upsample(format!("fusion.up{}", level + 2), top, factor)?
        } else {
            top
        };
        let cat = b.concat(format!("fusion.cat{}", level + 1), lateral[level], up)?;
        let cout = if level == 0 {
            FUSED_CHANNELS
        } else {
            cfg.scaled(fusion_widths[level])
        };
        let cin = b.shape(cat).c;
        top = b.conv_bn(&format!("fusion.fuse{}", level + 1), cat, conv3x3(cin, cout, 1, 1), true)?;
    }
    b.taps.fused = Some(top);
    Ok(top)
}

/// Two-branch SR-unit: branch 1 is 1x1 group conv, 3x3 depth-wise conv,
/// 1x1 group conv; branch 2 is 3x3 depth-wise conv, 1x1 group conv. Outputs
/// are concatenated and channel-shuffled.
pub fn sr_unit(b: &mut GraphBuilder, x: LayerId, cfg: &SRUnitConfig, prefix: &str) -> Result<LayerId> {
    cfg.validate()?;
    let c = b.shape(x).c;
    if c != cfg.in_channels {
        return Err(Error::ChannelCount {
            op: "sr_unit",
            expected: cfg.in_channels,
            got: c,
        });
    }
    let (left, right) = if cfg.splits_input() {
        let half = c / 2;
        (
            b.slice(format!("{prefix}.split_a"), x, 0, half)?,
            b.slice(format!("{prefix}.split_b"), x, half, half)?,
        )
    } else {
        (x, x)
    };
    let bin = cfg.branch_in();
    let bout = cfg.branch_out();
    let g = cfg.group_count;

    let p1 = b.conv_bn(&format!("{prefix}.b1.pw1"), left, ConvSpec::pointwise(bin, bout, g), true)?;
    let d1 = b.conv_bn(&format!("{prefix}.b1.dw"), p1, ConvSpec::depthwise(bout, cfg.dilation_branch1), true)?;
    let p2 = b.conv_bn(&format!("{prefix}.b1.pw2"), d1, ConvSpec::pointwise(bout, bout, g), false)?;

    let mut r = right;
    if cfg.branch2_depthwise {
        r = b.conv_bn(&format!("{prefix}.b2.dw"), r, ConvSpec::depthwise(bin, cfg.dilation_branch2), true)?;
    }
    let q = b.conv_bn(&format!("{prefix}.b2.pw"), r, ConvSpec::pointwise(bin, bout, g), false)?;

    let cat = b.concat(format!("{prefix}.cat"), p2, q)?;
    b.shuffle(format!("{prefix}.shuffle"), cat, cfg.shuffle_groups)
}

pub fn reasoning_module(b: &mut GraphBuilder, fused: LayerId, cfg: &ReasoningConfig) -> Result<LayerId> {
    b.set_component(Component::Reasoning);
    let plan = cfg.unit_plan(b.shape(fused).c)?;
    let mut cur = fused;
    for (i, unit) in plan.iter().enumerate() {
        cur = sr_unit(b, cur, unit, &format!("reasoning.u{}", i + 1))?;
    }
    b.taps.reasoned = Some(cur);
    Ok(cur)
}

/// 1x1 conv to two logits (with bias, no activation), softmax, then bilinear
/// upsampling back to `target` resolution.
pub fn predict_saliency(b: &mut GraphBuilder, x: LayerId, target: (usize, usize)) -> Result<LayerId> {
    b.set_component(Component::Classifier);
    let s = b.shape(x);
    if target.0 % s.h != 0 || target.1 % s.w != 0 || target.0 / s.h != target.1 / s.w {
        return Err(Error::InvalidConfig(format!(
            "cannot upsample {}x{} to {}x{} by an integer factor",
            s.h, s.w, target.0, target.1
        )));
    }
    let logits = b.conv("classifier.conv", x, ConvSpec::pointwise(s.c, 2, 1).with_bias(true))?;
    let probs = b.softmax2("classifier.softmax", logits)?;
    b.upsample("classifier.upsample", probs, target.0 / s.h)
}

/// Build the graph for one ablation variant at `cfg.input_size`.
pub fn build_network(cfg: &NetConfig) -> Result<NetworkGraph> {
    cfg.validate()?;
    let size = cfg.input_size;
    let mut b = GraphBuilder::new(Shape::new(1, 3, size, size)?);
    let input = b.input();
    let pyramid = backbone(&mut b, input, cfg)?;
    let features = match cfg.ablation {
        AblationVariant::Bps => {
            b.set_component(Component::Fusion);
            let cin = b.shape(pyramid[4]).c;
            b.conv_bn("fusion.reduce5", pyramid[4], ConvSpec::pointwise(cin, FUSED_CHANNELS, 1), true)?
        }
        AblationVariant::Hfs => fuse_features(&mut b, &pyramid, cfg)?,
        AblationVariant::Bfr => {
            let fused = fuse_features(&mut b, &pyramid, cfg)?;
            reasoning_module(&mut b, fused, &cfg.reasoning.with_dilations_forced_to_one())?
        }
        AblationVariant::SrNet => {
            let fused = fuse_features(&mut b, &pyramid, cfg)?;
            reasoning_module(&mut b, fused, &cfg.reasoning)?
        }
    };
    let out = predict_saliency(&mut b, features, (size, size))?;
    Ok(b.finish(out, Some(cfg.ablation), Some(cfg.backbone.kind)))
}

/// Graph holding a single SR-unit on an input of the given shape.
pub fn sr_unit_graph(input: Shape, cfg: &SRUnitConfig) -> Result<NetworkGraph> {
    let mut b = GraphBuilder::new(input);
    b.set_component(Component::Reasoning);
    let x = b.input();
    let out = sr_unit(&mut b, x, cfg, "unit")?;
    Ok(b.finish(out, None, None))
}

/// Graph holding only the reasoning stack.
pub fn reasoning_graph(input: Shape, cfg: &ReasoningConfig) -> Result<NetworkGraph> {
    let mut b = GraphBuilder::new(input);
    let x = b.input();
    let out = reasoning_module(&mut b, x, cfg)?;
    Ok(b.finish(out, None, None))
}

/// Graph holding only the backbone; its output is S5.
pub fn backbone_graph(cfg: &NetConfig) -> Result<NetworkGraph> {
    let size = cfg.input_size;
    let mut b = GraphBuilder::new(Shape::new(1, 3, size, size)?);
    let x = b.input();
    let taps = backbone(&mut b, x, cfg)?;
    Ok(b.finish(taps[4], None, Some(cfg.backbone.kind)))
}
