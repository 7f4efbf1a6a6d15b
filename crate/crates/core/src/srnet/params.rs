//! Trainable parameters and batch-norm buffers keyed by layer name.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::ParamGroup;
use crate::nnops::RunningStats;
use crate::srnet::graph::{Component, LayerKind, NetworkGraph};
use crate::tensor::{Shape, Tensor};

pub fn param_group(component: Component) -> ParamGroup {
    match component {
        Component::Backbone | Component::Fusion => ParamGroup::FeatureExtraction,
        Component::Reasoning => ParamGroup::Reasoning,
        Component::Classifier => ParamGroup::Classifier,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub group: ParamGroup,
    /// Whether weight decay applies (conv weights and BN scales only).
    pub decay: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, ParamEntry>,
    stats: BTreeMap<String, RunningStats>,
}

impl ParamStore {
    /// Kaiming-normal conv weights (`std = sqrt(2 / fan_in)`), zero biases,
    /// unit BN scales, zero BN shifts. Draws follow layer order.
    pub fn init(graph: &NetworkGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        for layer in &graph.layers {
            let group = param_group(layer.component);
            match &layer.kind {
                LayerKind::Conv(spec) => {
                    let (kh, kw) = spec.kernel;
                    let fan_in = (spec.in_per_group() * kh * kw) as f64;
                    let w = Tensor::randn(spec.weight_shape(), (2.0 / fan_in).sqrt(), &mut rng);
                    store.insert(format!("{}.weight", layer.name), w, group, true);
                    if spec.has_bias {
                        store.insert(format!("{}.bias", layer.name), Tensor::zeros(spec.bias_shape()), group, false);
                    }
                }
                LayerKind::BatchNorm => {
                    let c = layer.out_shape.c;
                    let s = affine_shape(c);
                    store.insert(format!("{}.gamma", layer.name), Tensor::full(s, 1.0), group, true);
                    store.insert(format!("{}.beta", layer.name), Tensor::zeros(s), group, false);
                    store.stats.insert(layer.name.clone(), RunningStats::new(c));
                }
                _ => {}
            }
        }
        store
    }

    pub fn insert(&mut self, name: String, value: Tensor, group: ParamGroup, decay: bool) {
        self.params.insert(name, ParamEntry { value, group, decay });
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamEntry)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn stats(&self, layer: &str) -> Option<&RunningStats> {
        self.stats.get(layer)
    }

    pub fn stats_mut(&mut self, layer: &str) -> Option<&mut RunningStats> {
        self.stats.get_mut(layer)
    }

    pub fn stats_iter(&self) -> impl Iterator<Item = (&String, &RunningStats)> {
        self.stats.iter()
    }

    pub fn insert_stats(&mut self, layer: String, stats: RunningStats) {
        self.stats.insert(layer, stats);
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn scalar_count_in(&self, group: ParamGroup) -> usize {
        self.params
            .values()
            .filter(|p| p.group == group)
            .map(|p| p.value.numel())
            .sum()
    }
}

pub(crate) fn affine_shape(c: usize) -> Shape {
    Shape { n: 1, c, h: 1, w: 1 }
}
