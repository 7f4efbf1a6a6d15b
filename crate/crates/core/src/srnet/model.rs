//! Executable network: a [`NetworkGraph`] plus its [`ParamStore`].

use std::collections::BTreeMap;

use crate::autograd::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::nnops::BnMode;
use crate::srnet::graph::{LayerId, LayerKind, NetworkGraph};
use crate::srnet::params::{param_group, ParamStore};
use crate::tensor::Tensor;

/// Node ids produced by recording a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: NodeId,
    /// Tape node of every layer, indexed by layer id.
    pub layers: Vec<NodeId>,
    pub params: BTreeMap<String, NodeId>,
    pub output: NodeId,
}

impl ForwardPass {
    pub fn node(&self, layer: LayerId) -> NodeId {
        self.layers[layer]
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub graph: NetworkGraph,
    pub params: ParamStore,
}

impl Model {
    pub fn new(graph: NetworkGraph, seed: u64) -> Self {
        let params = ParamStore::init(&graph, seed);
        Model { graph, params }
    }

    /// Record the forward pass of `x` (any batch size, same C/H/W as the
    /// graph input) on `tape`. Parameters are added lazily, right before the
    /// first layer that reads them.
    pub fn record(&self, tape: &mut Tape, x: Tensor, mode: BnMode) -> Result<ForwardPass> {
        let want = self.graph.input_shape();
        let got = x.shape();
        if (got.c, got.h, got.w) != (want.c, want.h, want.w) {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: want,
                right: got,
            });
        }
        let input = tape.constant(x);
        let mut nodes: Vec<NodeId> = Vec::with_capacity(self.graph.layers.len());
        let mut params = BTreeMap::new();
        for layer in &self.graph.layers {
            let group = param_group(layer.component);
            let mut param = |tape: &mut Tape, suffix: &str| -> Result<NodeId> {
                let name = format!("{}.{suffix}", layer.name);
                let entry = self
                    .params
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
                let id = tape.parameter(name.clone(), group, entry.value.clone());
                params.insert(name, id);
                Ok(id)
            };
            let arg = |k: usize| nodes[layer.inputs[k]];
            let id = match &layer.kind {
                LayerKind::Input => input,
                LayerKind::Conv(spec) => {
                    let w = param(tape, "weight")?;
                    let b = if spec.has_bias { Some(param(tape, "bias")?) } else { None };
                    tape.conv2d(arg(0), w, b, *spec)?
                }
                LayerKind::BatchNorm => {
                    let g = param(tape, "gamma")?;
                    let b = param(tape, "beta")?;
                    match mode {
                        BnMode::Train => tape.batch_norm_train(arg(0), g, b)?,
                        BnMode::Eval => {
                            let stats = self
                                .params
                                .stats(&layer.name)
                                .ok_or_else(|| Error::Checkpoint(format!("missing statistics for `{}`", layer.name)))?;
                            tape.batch_norm_eval(arg(0), g, b, stats)?
                        }
                    }
                }
                LayerKind::Relu => tape.relu(arg(0))?,
                LayerKind::Upsample { factor } => tape.upsample(arg(0), *factor)?,
                LayerKind::Concat => tape.concat(arg(0), arg(1))?,
                LayerKind::SliceChannels { start, len } => tape.slice_channels(arg(0), *start, *len)?,
                LayerKind::ChannelShuffle { groups } => tape.channel_shuffle(arg(0), *groups)?,
                LayerKind::Softmax2 => tape.softmax2(arg(0))?,
            };
            nodes.push(id);
        }
        let output = nodes[self.graph.output];
        Ok(ForwardPass {
            input,
            layers: nodes,
            params,
            output,
        })
    }

    /// Fold the batch statistics seen by each BN layer in `pass` into the
    /// running buffers.
    pub fn update_running_stats(&mut self, tape: &Tape, pass: &ForwardPass) {
        for layer in &self.graph.layers {
            if layer.kind == LayerKind::BatchNorm {
                let x = tape.value(pass.node(layer.inputs[0]));
                if let Some(stats) = self.params.stats_mut(&layer.name) {
                    stats.update(x);
                }
            }
        }
    }

    /// Eval-mode output of the graph.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let pass = self.record(&mut tape, x.clone(), BnMode::Eval)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Eval-mode values of the requested layers.
    pub fn forward_layers(&self, x: &Tensor, layers: &[LayerId], mode: BnMode) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let pass = self.record(&mut tape, x.clone(), mode)?;
        Ok(layers.iter().map(|&l| tape.value(pass.node(l)).clone()).collect())
    }

    /// Foreground probability map `(n, 1, H, W)` for a saliency network.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let probs = self.forward(x)?;
        let s = probs.shape();
        if s.c != 2 {
            return Err(Error::ChannelCount {
                op: "predict",
                expected: 2,
                got: s.c,
            });
        }
        let mut data = Vec::with_capacity(s.n * s.plane());
        for n in 0..s.n {
            data.extend_from_slice(probs.channel(n, 1));
        }
        Tensor::new(s.with_channels(1), data)
    }
}
