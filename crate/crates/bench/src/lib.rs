//! Seeded fixtures shared by the criterion benchmarks in `benches/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srnet_core::nnops::ConvSpec;
use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, Model, NetConfig};
use srnet_core::{Shape, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Input and weights for `spec` on a batch-1 `size x size` map.
pub fn conv_case(spec: &ConvSpec, size: usize, seed: u64) -> (Tensor, Tensor) {
    let mut r = rng(seed);
    let x = Tensor::randn(Shape { n: 1, c: spec.in_channels, h: size, w: size }, 1.0, &mut r);
    let w = Tensor::randn(spec.weight_shape(), 1.0, &mut r);
    (x, w)
}

pub fn desk_model(ablation: AblationVariant) -> Model {
    let cfg = NetConfig::desk(BackboneKind::ResnetLike, ablation);
    Model::new(build_network(&cfg).expect("desk config builds"), 0)
}

pub fn image(size: usize, seed: u64) -> Tensor {
    Tensor::rand_uniform(Shape { n: 1, c: 3, h: size, w: size }, 0.0, 1.0, &mut rng(seed))
}
