use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srnet_core::autograd::gradcheck::{finite_diff_check_with, GradCheckOptions};
use srnet_core::autograd::Tape;
use srnet_core::gradsuite::{network_check, operator_checks, REGISTERED_OPS, TOLERANCE};
use srnet_core::nnops::BnMode;
use srnet_core::srnet::{sr_unit_graph, AblationVariant, BackboneKind, Model, SRUnitConfig};
use srnet_core::{Shape, Tensor};

#[test]
fn every_operator_passes_on_five_seeds() {
    for seed in 0..5 {
        let checks = operator_checks(seed, 1e-5).unwrap();
        assert_eq!(checks.len(), REGISTERED_OPS.len());
        for c in &checks {
            assert!(c.passed(), "{} seed {seed}: {:?}", c.name, c.report);
        }
    }
}

#[test]
fn loss_gradient_wrt_logits_is_tight() {
    let checks = operator_checks(3, 1e-6).unwrap();
    let bce = checks.iter().find(|c| c.name == "balanced_bce").unwrap();
    assert!(bce.report.max_rel_error <= 1e-5, "{:?}", bce.report);
}

#[test]
fn small_sr_unit_every_coordinate() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = SRUnitConfig {
        dilation_branch1: 2,
        ..SRUnitConfig::new(16, 16)
    };
    let shape = Shape::new(1, 16, 8, 8).unwrap();
    let model = Model::new(sr_unit_graph(shape, &cfg).unwrap(), 4);
    let mut tape = Tape::new();
    let pass = model.record(&mut tape, Tensor::randn(shape, 1.0, &mut rng), BnMode::Train).unwrap();
    let loss = tape.weighted_sum(pass.output, Tensor::randn(shape, 1.0, &mut rng)).unwrap();
    let opts = GradCheckOptions {
        epsilon: 1e-4,
        ..Default::default()
    };
    let r = finite_diff_check_with(&mut tape, loss, &opts).unwrap();
    assert!(r.checked > 250, "{r:?}");
    assert!(r.max_rel_error <= TOLERANCE, "{r:?}");
}

#[test]
fn full_resnet_network_at_64() {
    let opts = GradCheckOptions {
        epsilon: 1e-4,
        max_coords_per_param: Some(3),
        seed: 5,
    };
    let r = network_check(BackboneKind::ResnetLike, AblationVariant::SrNet, 64, 1, &opts).unwrap();
    assert!(r.checked > 100, "{r:?}");
    assert!(r.max_rel_error <= TOLERANCE, "{r:?}");
}

#[test]
fn full_vgg_network_at_16() {
    let opts = GradCheckOptions {
        epsilon: 1e-3,
        max_coords_per_param: Some(2),
        seed: 6,
    };
    let r = network_check(BackboneKind::VggLike, AblationVariant::SrNet, 16, 2, &opts).unwrap();
    assert!(r.checked > 100, "{r:?}");
    assert!(r.max_rel_error <= TOLERANCE, "{r:?}");
}
