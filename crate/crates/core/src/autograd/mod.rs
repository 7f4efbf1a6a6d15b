//! Reverse-mode differentiation over a recorded tape.
//!
//! Every node stores its forward value. Parameter leaves are tagged with the
//! group they belong to so the optimizer and the reports can tell feature
//! extraction, reasoning and classifier weights apart. The tape is never
//! mutated by [`Tape::backward`], so a recorded graph can be differentiated
//! repeatedly or replayed with perturbed leaves (see [`gradcheck`]).

mod basic;
pub mod gradcheck;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use basic::{Add, Mul, Scale, Sub, SumAll, WeightedSum};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub type NodeId = usize;

/// A differentiable operator.
///
/// `backward` receives the forward inputs, the forward output and the
/// gradient of the loss with respect to that output, and returns one gradient
/// per input. `needs[i]` is false when input `i` does not lead to any
/// parameter; implementations may return `None` for it.
pub trait Operator: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        _grad: &Tensor,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        Err(Error::MissingAdjoint(self.name().to_string()))
    }

    /// Sign pattern of the non-differentiable points this op passes through,
    /// if any. Finite-difference checks skip coordinates that flip it.
    fn kink_pattern(&self, _inputs: &[&Tensor]) -> Option<Vec<bool>> {
        None
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    /// Backbone and fusion weights.
    FeatureExtraction,
    /// Saliency reasoning weights.
    Reasoning,
    /// Final 1x1 classifier weights.
    Classifier,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Constant,
    Parameter { name: String, group: ParamGroup },
    Op(Arc<dyn Operator>),
}

impl NodeKind {
    pub fn label(&self) -> &str {
        match self {
            NodeKind::Constant => "constant",
            NodeKind::Parameter { .. } => "parameter",
            NodeKind::Op(op) => op.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
    pub value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Gradients keyed by parameter node id.
pub type Gradients = BTreeMap<NodeId, Tensor>;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn parameter_ids(&self) -> &[NodeId] {
        &self.params
    }

    pub fn parameter_name(&self, id: NodeId) -> Option<&str> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Parameter { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn parameter_group(&self, id: NodeId) -> Option<ParamGroup> {
        match &self.nodes.get(id)?.kind {
            NodeKind::Parameter { group, .. } => Some(*group),
            _ => None,
        }
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(NodeKind::Constant, Vec::new(), value)
    }

    pub fn parameter(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> NodeId {
        let id = self.push(
            NodeKind::Parameter {
                name: name.into(),
                group,
            },
            Vec::new(),
            value.with_requires_grad(true),
        );
        self.params.push(id);
        id
    }

    /// Run `op` on the given nodes and record the result.
    pub fn apply(&mut self, op: impl Operator + 'static, inputs: &[NodeId]) -> Result<NodeId> {
        self.apply_arc(Arc::new(op), inputs)
    }

    pub fn apply_arc(&mut self, op: Arc<dyn Operator>, inputs: &[NodeId]) -> Result<NodeId> {
        for &i in inputs {
            if i >= self.nodes.len() {
                return Err(Error::UnknownNode(i));
            }
        }
        let value = {
            let vals: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
            op.forward(&vals)?
        };
        Ok(self.push(NodeKind::Op(op), inputs.to_vec(), value))
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            kind,
            inputs,
            value,
        });
        id
    }

    /// Overwrite a leaf value. Call [`Tape::replay_from`] afterwards to
    /// propagate the change.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = self.nodes.get_mut(id).ok_or(Error::UnknownNode(id))?;
        if matches!(node.kind, NodeKind::Op(_)) {
            return Err(Error::InvalidConfig(format!("node {id} is not a leaf")));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_leaf",
                left: node.value.shape(),
                right: value.shape(),
            });
        }
        let rg = node.value.requires_grad();
        node.value = value.with_requires_grad(rg);
        Ok(())
    }

    /// Recompute every operator node with index greater than `start`.
    pub fn replay_from(&mut self, start: NodeId) -> Result<()> {
        for i in start + 1..self.nodes.len() {
            let NodeKind::Op(op) = &self.nodes[i].kind else {
                continue;
            };
            let op = Arc::clone(op);
            let value = {
                let vals: Vec<&Tensor> = self.nodes[i]
                    .inputs
                    .iter()
                    .map(|&j| &self.nodes[j].value)
                    .collect();
                op.forward(&vals)?
            };
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Nodes that lie on a path from some parameter.
    fn needs_grad(&self) -> Vec<bool> {
        let mut needs = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            needs[i] = match node.kind {
                NodeKind::Parameter { .. } => true,
                NodeKind::Constant => false,
                NodeKind::Op(_) => node.inputs.iter().any(|&j| needs[j]),
            };
        }
        needs
    }

    /// Gradient of the scalar at `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_node = self.node(loss)?;
        if loss_node.value.shape() != Shape::scalar() {
            return Err(Error::NonScalarLoss(loss_node.value.shape()));
        }
        let needs = self.needs_grad();
        let mut grads: Vec<Option<Tensor>> = vec![None; loss + 1];
        grads[loss] = Some(Tensor::scalar(1.0));

        for i in (0..=loss).rev() {
            let node = &self.nodes[i];
            let NodeKind::Op(op) = &node.kind else {
                continue;
            };
            if !needs[i] {
                continue;
            }
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
            let input_needs: Vec<bool> = node.inputs.iter().map(|&j| needs[j]).collect();
            let input_grads = op.backward(&inputs, &node.value, &grad, &input_needs)?;
            for ((&j, g), &need) in node.inputs.iter().zip(input_grads).zip(&input_needs) {
                let Some(g) = g else { continue };
                if !need {
                    continue;
                }
                match &mut grads[j] {
                    Some(acc) => acc.accumulate(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut out = Gradients::new();
        for &p in &self.params {
            if p > loss {
                continue;
            }
            let g = grads[p]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[p].value.shape()));
            out.insert(p, g);
        }
        Ok(out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Mul, &[a, b])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(SumAll, &[a])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(Scale(factor), &[a])
    }

    /// `sum(a * weights)` with a constant weight tensor.
    pub fn weighted_sum(&mut self, a: NodeId, weights: Tensor) -> Result<NodeId> {
        self.apply(WeightedSum(Arc::new(weights)), &[a])
    }
}
