//! The SRNet architecture: configuration, graph construction, parameters and
//! the executable model.

pub mod build;
pub mod config;
pub mod graph;
pub mod model;
pub mod params;

pub use build::{
    backbone, backbone_graph, build_network, fuse_features, predict_saliency, reasoning_graph, reasoning_module,
    sr_unit, sr_unit_graph,
};
pub use config::{
    AblationVariant, BackboneKind, BackboneVariant, NetConfig, ReasoningConfig, SRUnitConfig, FUSED_CHANNELS,
};
pub use graph::{Component, GraphBuilder, Layer, LayerId, LayerKind, NetworkGraph, Taps};
pub use model::{ForwardPass, Model};
pub use params::{param_group, ParamEntry, ParamStore};
