use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, Model, NetConfig};
use srnet_core::training::{augment, checkpoint, train, Augmentation, Sample, TrainConfig};
use srnet_core::{Shape, Tensor};

fn toy_sample(rng: &mut ChaCha8Rng, size: usize) -> Sample {
    let image = Tensor::rand_uniform(Shape::new(1, 3, size, size).unwrap(), 0.0, 1.0, rng);
    let (cy, cx, r) = (
        rng.random_range(0..size) as f64,
        rng.random_range(0..size) as f64,
        size as f64 / 4.0,
    );
    let mask: Vec<f64> = (0..size * size)
        .map(|k| {
            let (y, x) = ((k / size) as f64, (k % size) as f64);
            f64::from(u8::from((y - cy).powi(2) + (x - cx).powi(2) <= r * r))
        })
        .collect();
    Sample::new(image, Tensor::new(Shape::new(1, 1, size, size).unwrap(), mask).unwrap()).unwrap()
}

fn model(ablation: AblationVariant, size: usize, seed: u64) -> Model {
    let cfg = NetConfig {
        input_size: size,
        ..NetConfig::desk(BackboneKind::ResnetLike, ablation)
    };
    Model::new(build_network(&cfg).unwrap(), seed)
}

#[test]
fn one_epoch_on_one_sample_moves_every_trained_tensor() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = vec![toy_sample(&mut rng, 32)];
    let mut m = model(AblationVariant::Bps, 32, 3);
    let before = m.params.clone();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let logs = train(&mut m, &data, &cfg, |_| {}).unwrap();
    assert_eq!(logs.len(), 1);
    assert!(logs[0].mean_loss.is_finite() && logs[0].mean_loss > 0.0);
    let changed = m
        .params
        .iter()
        .filter(|(name, e)| before.get(name).unwrap().value != e.value)
        .count();
    assert!(changed * 2 > m.params.len(), "{changed} of {}", m.params.len());
    assert_ne!(before.stats_iter().collect::<Vec<_>>(), m.params.stats_iter().collect::<Vec<_>>());
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<Sample> = (0..4).map(|_| toy_sample(&mut rng, 32)).collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = model(AblationVariant::Bps, 32, 9);
        let logs = train(&mut m, &data, &cfg, |_| {}).unwrap();
        (logs.iter().map(|l| l.mean_loss).collect::<Vec<_>>(), checkpoint::to_bytes(&m.params).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut trained = model(AblationVariant::SrNet, 64, 4);
    let data = vec![toy_sample(&mut rng, 64), toy_sample(&mut rng, 64)];
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };
    train(&mut trained, &data, &cfg, |_| {}).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &trained.params).unwrap();
    let mut restored = model(AblationVariant::SrNet, 64, 99);
    checkpoint::load(&path, &mut restored.params).unwrap();

    for _ in 0..10 {
        let x = Tensor::rand_uniform(Shape::new(1, 3, 64, 64).unwrap(), 0.0, 1.0, &mut rng);
        let (a, b) = (trained.forward(&x).unwrap(), restored.forward(&x).unwrap());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn checkpoint_rejects_other_architecture() {
    let bps = model(AblationVariant::Bps, 32, 0);
    let mut sr = model(AblationVariant::SrNet, 32, 0);
    let bytes = checkpoint::to_bytes(&bps.params).unwrap();
    assert!(checkpoint::load_into(&mut sr.params, &bytes).is_err());
    assert!(checkpoint::load_into(&mut sr.params, &bytes[..10]).is_err());
}

#[test]
fn augmented_masks_stay_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = toy_sample(&mut rng, 12);
    let ones = s.mask.sum();
    for seed in 0..1000 {
        let a = augment(&s, seed);
        assert!(a.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(a.mask.sum(), ones);
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

proptest! {
    #[test]
    fn augmentation_inverts_bit_exactly(
        flip in any::<bool>(),
        quarter_turns in 0u8..4,
        (h, w, data) in (1usize..=7, 1usize..=7).prop_flat_map(|(h, w)| (
            Just(h), Just(w), prop::collection::vec(-1e6f64..1e6, 2 * h * w),
        )),
    ) {
        let x = Tensor::new(Shape::new(1, 2, h, w).unwrap(), data).unwrap();
        let a = Augmentation { flip, quarter_turns };
        let y = a.apply_tensor(&x);
        if quarter_turns % 2 == 1 {
            prop_assert_eq!((y.shape().h, y.shape().w), (w, h));
        }
        prop_assert_eq!(a.invert_tensor(&y), x);
    }
}
