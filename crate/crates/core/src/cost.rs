//! Analytic cost model over a [`NetworkGraph`]: parameters, mult-adds,
//! data movement and receptive fields.
//!
//! One mult-add is one multiply-accumulate. Only convolutions contribute
//! mult-adds; BN, ReLU and softmax are elementwise and counted as zero,
//! while upsample, concat, slice and shuffle report the bytes they move.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::srnet::{Component, LayerId, LayerKind, NetworkGraph};
use crate::tensor::Shape;

/// Exact group-conv cost versus the asymptotic statement it refines.
pub const COMPLEXITY_NOTE: &str = "group conv params = C_out * (C_in / g) * k^2, i.e. O(C^2 / g) at C_in = C_out = C \
(the O(C / #groups) figure in the literature drops a factor of C); depth-wise (g = C) gives O(C)";

const BYTES_PER_VALUE: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub id: LayerId,
    pub name: String,
    pub kind: &'static str,
    pub component: Component,
    pub params: u64,
    pub mult_adds: u64,
    pub bytes_moved: u64,
    pub receptive_field: f64,
    /// Set when the receptive field was taken along the deepest of several
    /// merged paths.
    pub branched: bool,
    pub out_shape: Shape,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Totals {
    pub params: u64,
    pub mult_adds: u64,
    pub bytes_moved: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub input: Shape,
    pub rows: Vec<LayerCost>,
    pub totals: BTreeMap<Component, Totals>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rf {
    /// Receptive field side length in input pixels.
    pub size: f64,
    /// Distance in input pixels between adjacent output positions.
    pub jump: f64,
    pub branched: bool,
}

/// Re-run shape inference for a different input size.
pub fn infer_shapes(graph: &NetworkGraph, input: Shape) -> Result<Vec<Shape>> {
    let mut shapes: Vec<Shape> = Vec::with_capacity(graph.layers.len());
    for layer in &graph.layers {
        let arg = |k: usize| shapes[layer.inputs[k]];
        let s = match &layer.kind {
            LayerKind::Input => {
                if input.c != layer.out_shape.c {
                    return Err(Error::ChannelCount {
                        op: "cost input",
                        expected: layer.out_shape.c,
                        got: input.c,
                    });
                }
                input
            }
            LayerKind::Conv(spec) => spec.output_shape(arg(0))?,
            LayerKind::BatchNorm | LayerKind::Relu | LayerKind::ChannelShuffle { .. } | LayerKind::Softmax2 => arg(0),
            LayerKind::Upsample { factor } => Shape {
                h: arg(0).h * factor,
                w: arg(0).w * factor,
                ..arg(0)
            },
            LayerKind::Concat => {
                let (a, b) = (arg(0), arg(1));
                if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
                    return Err(Error::ShapeMismatch {
                        op: "concat_channels",
                        left: a,
                        right: b,
                    });
                }
                a.with_channels(a.c + b.c)
            }
            LayerKind::SliceChannels { len, .. } => arg(0).with_channels(*len),
        };
        shapes.push(s);
    }
    Ok(shapes)
}

/// Trainable scalars of one layer: conv weights (+ bias) or BN `gamma, beta`.
pub fn layer_params(graph: &NetworkGraph, id: LayerId) -> u64 {
    let layer = graph.layer(id);
    match &layer.kind {
        LayerKind::Conv(spec) => spec.param_count(),
        LayerKind::BatchNorm => 2 * layer.out_shape.c as u64,
        _ => 0,
    }
}

pub fn count_params(graph: &NetworkGraph) -> u64 {
    (0..graph.layers.len()).map(|i| layer_params(graph, i)).sum()
}

/// Receptive fields of every layer downstream of `start`, measured in units
/// of `start`'s resolution. Layers not reachable from `start` get `None`.
///
/// `r <- r + (k - 1) d j`, `j <- j * stride`; upsampling divides `j`. Where
/// paths merge, the largest field is kept and the row is flagged.
pub fn receptive_fields_from(graph: &NetworkGraph, start: LayerId) -> Vec<Option<Rf>> {
    let mut out: Vec<Option<Rf>> = vec![None; graph.layers.len()];
    out[start] = Some(Rf {
        size: 1.0,
        jump: 1.0,
        branched: false,
    });
    for layer in graph.layers.iter().skip(start + 1) {
        let ins: Vec<Rf> = layer.inputs.iter().filter_map(|&i| out[i]).collect();
        let Some(deepest) = ins.iter().copied().max_by(|a, b| a.size.total_cmp(&b.size)) else {
            continue;
        };
        let merged = ins.len() > 1 || ins.iter().any(|r| r.branched);
        let rf = match &layer.kind {
            LayerKind::Conv(spec) => Rf {
                size: deepest.size + ((spec.kernel.0 - 1) * spec.dilation) as f64 * deepest.jump,
                jump: deepest.jump * spec.stride as f64,
                branched: merged,
            },
            LayerKind::Upsample { factor } => Rf {
                jump: deepest.jump / *factor as f64,
                branched: merged,
                ..deepest
            },
            _ => Rf {
                branched: merged,
                ..deepest
            },
        };
        out[layer.id] = Some(rf);
    }
    out
}

/// Receptive field of the reasoning stack alone, at the fused-feature
/// resolution.
pub fn reasoning_receptive_field(graph: &NetworkGraph) -> Option<f64> {
    let start = graph.taps.fused?;
    let end = graph.taps.reasoned?;
    receptive_fields_from(graph, start)[end].map(|r| r.size)
}

pub fn cost_report(graph: &NetworkGraph, input: Shape) -> Result<CostReport> {
    let shapes = infer_shapes(graph, input)?;
    let rfs = receptive_fields_from(graph, 0);
    let mut rows = Vec::with_capacity(graph.layers.len());
    let mut totals: BTreeMap<Component, Totals> = Component::ALL.iter().map(|&c| (c, Totals::default())).collect();
    for layer in &graph.layers {
        let out = shapes[layer.id];
        let mult_adds = match &layer.kind {
            LayerKind::Conv(spec) => spec.mult_adds(out),
            _ => 0,
        };
        let bytes_moved = match layer.kind {
            LayerKind::Upsample { .. }
            | LayerKind::Concat
            | LayerKind::SliceChannels { .. }
            | LayerKind::ChannelShuffle { .. } => out.numel() as u64 * BYTES_PER_VALUE,
            _ => 0,
        };
        let params = layer_params(graph, layer.id);
        let rf = rfs[layer.id].expect("every layer is reachable from the input");
        let t = totals.get_mut(&layer.component).expect("all components present");
        t.params += params;
        t.mult_adds += mult_adds;
        t.bytes_moved += bytes_moved;
        rows.push(LayerCost {
            id: layer.id,
            name: layer.name.clone(),
            kind: layer.kind.tag(),
            component: layer.component,
            params,
            mult_adds,
            bytes_moved,
            receptive_field: rf.size,
            branched: rf.branched,
            out_shape: out,
        });
    }
    Ok(CostReport { input, rows, totals })
}

impl CostReport {
    pub fn total(&self) -> Totals {
        self.totals.values().fold(Totals::default(), |a, t| Totals {
            params: a.params + t.params,
            mult_adds: a.mult_adds + t.mult_adds,
            bytes_moved: a.bytes_moved + t.bytes_moved,
        })
    }

    pub fn component(&self, c: Component) -> Totals {
        self.totals.get(&c).copied().unwrap_or_default()
    }

    /// Fraction of all mult-adds spent in `c`.
    pub fn mult_add_share(&self, c: Component) -> f64 {
        self.component(c).mult_adds as f64 / self.total().mult_adds as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,name,kind,component,params,mult_adds,bytes_moved,receptive_field,branched,out_shape\n");
        for r in &self.rows {
            let s = r.out_shape;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}x{}x{}x{}",
                r.id,
                r.name,
                r.kind,
                r.component.name(),
                r.params,
                r.mult_adds,
                r.bytes_moved,
                r.receptive_field,
                u8::from(r.branched),
                s.n,
                s.c,
                s.h,
                s.w
            );
        }
        for (c, t) in &self.totals {
            let _ = writeln!(out, "total,{},,,{},{},{},,,", c.name(), t.params, t.mult_adds, t.bytes_moved);
        }
        let t = self.total();
        let _ = writeln!(out, "total,all,,,{},{},{},,,", t.params, t.mult_adds, t.bytes_moved);
        out
    }

    pub fn to_table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(9);
        let mut out = format!(
            "# input {}; mult-adds count one per multiply-accumulate\n{:<name_w$} {:<10} {:<10} {:>12} {:>16} {:>12} {:>8} {:>20}\n",
            self.input, "layer", "kind", "component", "params", "mult_adds", "bytes", "rf", "output"
        );
        for r in &self.rows {
            let rf = format!("{}{}", r.receptive_field, if r.branched { "*" } else { "" });
            let _ = writeln!(
                out,
                "{:<name_w$} {:<10} {:<10} {:>12} {:>16} {:>12} {:>8} {:>20}",
                r.name,
                r.kind,
                r.component.name(),
                r.params,
                r.mult_adds,
                r.bytes_moved,
                rf,
                r.out_shape.to_string()
            );
        }
        out.push('\n');
        let total = self.total();
        for (c, t) in &self.totals {
            let _ = writeln!(
                out,
                "{:<name_w$} {:>12} params {:>16} mult-adds ({:5.2}%)",
                format!("total {}", c.name()),
                t.params,
                t.mult_adds,
                100.0 * t.mult_adds as f64 / total.mult_adds.max(1) as f64
            );
        }
        let _ = writeln!(
            out,
            "{:<name_w$} {:>12} params {:>16} mult-adds",
            "total", total.params, total.mult_adds
        );
        let _ = writeln!(out, "# rf marked * was taken along the deepest of merged paths");
        let _ = writeln!(out, "# {COMPLEXITY_NOTE}");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnops::ConvSpec;
    use crate::srnet::GraphBuilder;

    fn single(spec: ConvSpec) -> NetworkGraph {
        let mut b = GraphBuilder::new(Shape::new(1, spec.in_channels, 16, 16).unwrap());
        let x = b.input();
        let y = b.conv("c", x, spec).unwrap();
        b.finish(y, None, None)
    }

    #[test]
    fn single_layer_receptive_fields() {
        for (d, want) in [(1, 3.0), (2, 5.0)] {
            let g = single(ConvSpec::new(1, 1, 3).with_padding(d).with_dilation(d));
            assert_eq!(receptive_fields_from(&g, 0)[1].unwrap().size, want);
        }
    }

    #[test]
    fn stride_grows_jump() {
        let mut b = GraphBuilder::new(Shape::new(1, 1, 16, 16).unwrap());
        let x = b.input();
        let y = b.conv("a", x, ConvSpec::new(1, 1, 3).with_stride(2).with_padding(1)).unwrap();
        let z = b.conv("b", y, ConvSpec::new(1, 1, 3).with_padding(1)).unwrap();
        let g = b.finish(z, None, None);
        let rf = receptive_fields_from(&g, 0);
        assert_eq!(rf[2].unwrap().size, 7.0);
        assert_eq!(rf[2].unwrap().jump, 2.0);
    }

    #[test]
    fn counts_and_totals() {
        let g = single(ConvSpec::pointwise(64, 64, 4));
        let r = cost_report(&g, g.input_shape()).unwrap();
        assert_eq!(r.total().params, 1024);
        assert_eq!(r.total().mult_adds, 1024 * 256);
        let sum: u64 = r.rows.iter().map(|x| x.params).sum();
        assert_eq!(sum, r.total().params);
        let big = cost_report(&g, Shape::new(1, 64, 32, 32).unwrap()).unwrap();
        assert_eq!(big.total().mult_adds, 4 * r.total().mult_adds);
    }
}
