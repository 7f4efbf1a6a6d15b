//! Layer-level description of a built network.
//!
//! A [`NetworkGraph`] is an ordered list of layers with resolved shapes. The
//! forward pass interprets it, the optimizer derives its parameter list from
//! it, and the cost model reads it directly. It round-trips through a plain
//! text manifest.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nnops::ConvSpec;
use crate::srnet::config::{AblationVariant, BackboneKind};
use crate::tensor::Shape;

pub type LayerId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Backbone,
    Fusion,
    Reasoning,
    Classifier,
}

impl Component {
    pub const ALL: [Component; 4] = [Self::Backbone, Self::Fusion, Self::Reasoning, Self::Classifier];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Backbone => "backbone",
            Component::Fusion => "fusion",
            Component::Reasoning => "reasoning",
            Component::Classifier => "classifier",
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown component `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Input,
    Conv(ConvSpec),
    BatchNorm,
    Relu,
    Upsample { factor: usize },
    Concat,
    SliceChannels { start: usize, len: usize },
    ChannelShuffle { groups: usize },
    Softmax2,
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv(_) => "conv",
            LayerKind::BatchNorm => "bn",
            LayerKind::Relu => "relu",
            LayerKind::Upsample { .. } => "upsample",
            LayerKind::Concat => "concat",
            LayerKind::SliceChannels { .. } => "slice",
            LayerKind::ChannelShuffle { .. } => "shuffle",
            LayerKind::Softmax2 => "softmax2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: LayerId,
    pub name: String,
    pub kind: LayerKind,
    pub component: Component,
    pub inputs: Vec<LayerId>,
    pub out_shape: Shape,
}

/// Named layers of interest: the five pyramid outputs, the fused feature and
/// the reasoning output, when present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taps {
    pub pyramid: Vec<LayerId>,
    pub fused: Option<LayerId>,
    pub reasoned: Option<LayerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    pub ablation: Option<AblationVariant>,
    pub backbone: Option<BackboneKind>,
    pub layers: Vec<Layer>,
    pub output: LayerId,
    pub taps: Taps,
}

impl NetworkGraph {
    pub fn input_shape(&self) -> Shape {
        self.layers[0].out_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.layers[self.output].out_shape
    }

    pub fn layer(&self, id: LayerId) -> &Layer {
        &self.layers[id]
    }

    pub fn input_shapes(&self, layer: &Layer) -> Vec<Shape> {
        layer.inputs.iter().map(|&i| self.layers[i].out_shape).collect()
    }

    pub fn convs(&self) -> impl Iterator<Item = (&Layer, &ConvSpec)> {
        self.layers.iter().filter_map(|l| match &l.kind {
            LayerKind::Conv(spec) => Some((l, spec)),
            _ => None,
        })
    }

    pub fn depthwise_count(&self) -> usize {
        self.convs().filter(|(_, s)| s.is_depthwise()).count()
    }

    pub fn count_kind(&self, tag: &str) -> usize {
        self.layers.iter().filter(|l| l.kind.tag() == tag).count()
    }

    /// Number of SR-units, recognised by their closing channel shuffle.
    pub fn sr_unit_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.component == Component::Reasoning && matches!(l.kind, LayerKind::ChannelShuffle { .. }))
            .count()
    }

    pub fn find(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Text manifest: one `layer` line per layer in execution order.
    pub fn to_manifest(&self) -> String {
        let mut out = String::from("# srnet manifest v1\n");
        out.push_str(&format!(
            "network ablation={} backbone={} output={}\n",
            self.ablation.map_or("-".to_string(), |a| a.to_string()),
            self.backbone.map_or("-".to_string(), |b| b.to_string()),
            self.output
        ));
        for l in &self.layers {
            let inputs = l.inputs.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
            out.push_str(&format!(
                "layer id={} name={} kind={} component={} inputs={} out={}",
                l.id,
                l.name,
                l.kind.tag(),
                l.component.name(),
                if inputs.is_empty() { "-".into() } else { inputs },
                ShapeText(l.out_shape)
            ));
            match &l.kind {
                LayerKind::Conv(s) => out.push_str(&format!(
                    " cin={} cout={} k={}x{} stride={} pad={} dil={} groups={} bias={}",
                    s.in_channels,
                    s.out_channels,
                    s.kernel.0,
                    s.kernel.1,
                    s.stride,
                    s.padding,
                    s.dilation,
                    s.groups,
                    u8::from(s.has_bias)
                )),
                LayerKind::Upsample { factor } => out.push_str(&format!(" factor={factor}")),
                LayerKind::SliceChannels { start, len } => out.push_str(&format!(" start={start} len={len}")),
                LayerKind::ChannelShuffle { groups } => out.push_str(&format!(" groups={groups}")),
                _ => {}
            }
            out.push('\n');
        }
        for (i, &p) in self.taps.pyramid.iter().enumerate() {
            out.push_str(&format!("tap name=S{} layer={p}\n", i + 1));
        }
        if let Some(f) = self.taps.fused {
            out.push_str(&format!("tap name=fused layer={f}\n"));
        }
        if let Some(r) = self.taps.reasoned {
            out.push_str(&format!("tap name=reasoned layer={r}\n"));
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<NetworkGraph> {
        let mut graph = NetworkGraph {
            ablation: None,
            backbone: None,
            layers: Vec::new(),
            output: 0,
            taps: Taps::default(),
        };
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len();
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse { offset: here, message: m };
            let mut words = line.split_whitespace();
            let head = words.next().unwrap_or_default();
            let fields = Fields::parse(words).map_err(err)?;
            match head {
                "network" => {
                    let a = fields.get("ablation").map_err(err)?;
                    graph.ablation = if a == "-" { None } else { Some(a.parse()?) };
                    let b = fields.get("backbone").map_err(err)?;
                    graph.backbone = if b == "-" { None } else { Some(b.parse()?) };
                    graph.output = fields.num("output").map_err(err)?;
                }
                "layer" => {
                    let layer = parse_layer(&fields).map_err(err)?;
                    if layer.id != graph.layers.len() {
                        return Err(err(format!("layer id {} out of order", layer.id)));
                    }
                    graph.layers.push(layer);
                }
                "tap" => {
                    let name = fields.get("name").map_err(err)?;
                    let id: usize = fields.num("layer").map_err(err)?;
                    match name {
                        "fused" => graph.taps.fused = Some(id),
                        "reasoned" => graph.taps.reasoned = Some(id),
                        _ => graph.taps.pyramid.push(id),
                    }
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        if graph.layers.is_empty() || graph.output >= graph.layers.len() {
            return Err(Error::Parse {
                offset,
                message: "manifest has no layers or an invalid output".into(),
            });
        }
        Ok(graph)
    }
}

struct ShapeText(Shape);

impl fmt::Display for ShapeText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        write!(f, "{}x{}x{}x{}", s.n, s.c, s.h, s.w)
    }
}

struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn parse(words: impl Iterator<Item = &'a str>) -> std::result::Result<Self, String> {
        words
            .map(|w| w.split_once('=').ok_or_else(|| format!("expected key=value, got `{w}`")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Fields)
    }

    fn get(&self, key: &str) -> std::result::Result<&'a str, String> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("missing field `{key}`"))
    }

    fn num(&self, key: &str) -> std::result::Result<usize, String> {
        let v = self.get(key)?;
        v.parse().map_err(|_| format!("field `{key}` is not a count: `{v}`"))
    }

    fn pair(&self, key: &str) -> std::result::Result<(usize, usize), String> {
        let v = self.get(key)?;
        let (a, b) = v.split_once('x').ok_or_else(|| format!("bad pair `{v}`"))?;
        Ok((
            a.parse().map_err(|_| format!("bad pair `{v}`"))?,
            b.parse().map_err(|_| format!("bad pair `{v}`"))?,
        ))
    }
}

fn parse_shape(v: &str) -> std::result::Result<Shape, String> {
    let d: Vec<usize> = v
        .split('x')
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("bad shape `{v}`"))?;
    if d.len() != 4 {
        return Err(format!("bad shape `{v}`"));
    }
    Shape::new(d[0], d[1], d[2], d[3]).map_err(|e| e.to_string())
}

fn parse_layer(f: &Fields<'_>) -> std::result::Result<Layer, String> {
    let kind = match f.get("kind")? {
        "input" => LayerKind::Input,
        "conv" => LayerKind::Conv(ConvSpec {
            in_channels: f.num("cin")?,
            out_channels: f.num("cout")?,
            kernel: f.pair("k")?,
            stride: f.num("stride")?,
            padding: f.num("pad")?,
            dilation: f.num("dil")?,
            groups: f.num("groups")?,
            has_bias: f.num("bias")? == 1,
        }),
        "bn" => LayerKind::BatchNorm,
        "relu" => LayerKind::Relu,
        "upsample" => LayerKind::Upsample { factor: f.num("factor")? },
        "concat" => LayerKind::Concat,
        "slice" => LayerKind::SliceChannels {
            start: f.num("start")?,
            len: f.num("len")?,
        },
        "shuffle" => LayerKind::ChannelShuffle { groups: f.num("groups")? },
        "softmax2" => LayerKind::Softmax2,
        other => return Err(format!("unknown layer kind `{other}`")),
    };
    let inputs = match f.get("inputs")? {
        "-" => Vec::new(),
        s => s
            .split(',')
            .map(|i| i.parse::<usize>().map_err(|_| format!("bad input list `{s}`")))
            .collect::<std::result::Result<_, _>>()?,
    };
    Ok(Layer {
        id: f.num("id")?,
        name: f.get("name")?.to_string(),
        kind,
        component: f.get("component")?.parse().map_err(|e: Error| e.to_string())?,
        inputs,
        out_shape: parse_shape(f.get("out")?)?,
    })
}

/// Appends layers while resolving output shapes.
#[derive(Debug)]
pub struct GraphBuilder {
    layers: Vec<Layer>,
    component: Component,
    pub taps: Taps,
}

impl GraphBuilder {
    pub fn new(input: Shape) -> Self {
        GraphBuilder {
            layers: vec![Layer {
                id: 0,
                name: "input".into(),
                kind: LayerKind::Input,
                component: Component::Backbone,
                inputs: Vec::new(),
                out_shape: input,
            }],
            component: Component::Backbone,
            taps: Taps::default(),
        }
    }

    pub fn input(&self) -> LayerId {
        0
    }

    pub fn set_component(&mut self, c: Component) {
        self.component = c;
    }

    pub fn shape(&self, id: LayerId) -> Shape {
        self.layers[id].out_shape
    }

    fn push(&mut self, name: String, kind: LayerKind, inputs: Vec<LayerId>, out_shape: Shape) -> LayerId {
        let id = self.layers.len();
        self.layers.push(Layer {
            id,
            name,
            kind,
            component: self.component,
            inputs,
            out_shape,
        });
        id
    }

    pub fn conv(&mut self, name: impl Into<String>, x: LayerId, spec: ConvSpec) -> Result<LayerId> {
        let out = spec.output_shape(self.shape(x))?;
        Ok(self.push(name.into(), LayerKind::Conv(spec), vec![x], out))
    }

    pub fn batch_norm(&mut self, name: impl Into<String>, x: LayerId) -> LayerId {
        let s = self.shape(x);
        self.push(name.into(), LayerKind::BatchNorm, vec![x], s)
    }

    pub fn relu(&mut self, name: impl Into<String>, x: LayerId) -> LayerId {
        let s = self.shape(x);
        self.push(name.into(), LayerKind::Relu, vec![x], s)
    }

    /// `conv -> bn [-> relu]`, named `<prefix>`, `<prefix>.bn`, `<prefix>.relu`.
    pub fn conv_bn(&mut self, prefix: &str, x: LayerId, spec: ConvSpec, relu: bool) -> Result<LayerId> {
        let c = self.conv(prefix, x, spec)?;
        let b = self.batch_norm(format!("{prefix}.bn"), c);
        Ok(if relu { self.relu(format!("{prefix}.relu"), b) } else { b })
    }

    pub fn upsample(&mut self, name: impl Into<String>, x: LayerId, factor: usize) -> Result<LayerId> {
        if factor == 0 {
            return Err(Error::InvalidConfig("upsample factor must be at least 1".into()));
        }
        let s = self.shape(x);
        let out = Shape {
            h: s.h * factor,
            w: s.w * factor,
            ..s
        };
        Ok(self.push(name.into(), LayerKind::Upsample { factor }, vec![x], out))
    }

    pub fn concat(&mut self, name: impl Into<String>, a: LayerId, b: LayerId) -> Result<LayerId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                left: sa,
                right: sb,
            });
        }
        Ok(self.push(name.into(), LayerKind::Concat, vec![a, b], sa.with_channels(sa.c + sb.c)))
    }

    pub fn slice(&mut self, name: impl Into<String>, x: LayerId, start: usize, len: usize) -> Result<LayerId> {
        let s = self.shape(x);
        if len == 0 || start + len > s.c {
            return Err(Error::InvalidConfig(format!("channel slice {start}+{len} out of range for {s}")));
        }
        Ok(self.push(name.into(), LayerKind::SliceChannels { start, len }, vec![x], s.with_channels(len)))
    }

    pub fn shuffle(&mut self, name: impl Into<String>, x: LayerId, groups: usize) -> Result<LayerId> {
        let s = self.shape(x);
        if groups == 0 || s.c % groups != 0 {
            return Err(Error::divisibility("channel_shuffle channels", s.c, groups));
        }
        Ok(self.push(name.into(), LayerKind::ChannelShuffle { groups }, vec![x], s))
    }

    pub fn softmax2(&mut self, name: impl Into<String>, x: LayerId) -> Result<LayerId> {
        let s = self.shape(x);
        if s.c != 2 {
            return Err(Error::ChannelCount {
                op: "softmax2",
                expected: 2,
                got: s.c,
            });
        }
        Ok(self.push(name.into(), LayerKind::Softmax2, vec![x], s))
    }

    pub fn finish(self, output: LayerId, ablation: Option<AblationVariant>, backbone: Option<BackboneKind>) -> NetworkGraph {
        NetworkGraph {
            ablation,
            backbone,
            layers: self.layers,
            output,
            taps: self.taps,
        }
    }
}
