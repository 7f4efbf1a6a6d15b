use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srnet_core::autograd::gradcheck::{finite_diff_check_with, GradCheckOptions};
use srnet_core::autograd::Tape;
use srnet_core::nnops::{BnMode, BN_EPS};
use srnet_core::srnet::*;
use srnet_core::{Shape, Tensor};

fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w).unwrap()
}

fn image(size: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape(1, 3, size, size), 1.0, &mut rng)
}

fn graph(kind: BackboneKind, ablation: AblationVariant) -> NetworkGraph {
    build_network(&NetConfig::reference(kind, ablation)).unwrap()
}

#[test]
fn resnet_pyramid_at_320() {
    let g = graph(BackboneKind::ResnetLike, AblationVariant::SrNet);
    let shapes: Vec<Shape> = g.taps.pyramid.iter().map(|&l| g.layer(l).out_shape).collect();
    assert_eq!(
        shapes,
        vec![
            shape(1, 64, 160, 160),
            shape(1, 256, 80, 80),
            shape(1, 512, 40, 40),
            shape(1, 1024, 20, 20),
            shape(1, 2048, 10, 10),
        ]
    );
}

#[test]
fn vgg_top_levels_share_resolution() {
    let g = graph(BackboneKind::VggLike, AblationVariant::SrNet);
    let p = &g.taps.pyramid;
    for (level, c) in [(2, 512), (3, 512), (4, 1024)] {
        assert_eq!(g.layer(p[level]).out_shape, shape(1, c, 40, 40));
    }
    let top = g.find("backbone.s5.conv1").unwrap();
    let LayerKind::Conv(spec) = &top.kind else { panic!() };
    assert_eq!((spec.kernel, spec.dilation, spec.padding), ((3, 3), 8, 8));
    // no upsampling between the stride-8 levels
    assert!(g.find("fusion.up5").is_none());
    assert!(g.find("fusion.up4").is_none());
    assert!(g.find("fusion.up3").is_some());
}

#[test]
fn full_width_backbone_forward_at_64() {
    let cfg = NetConfig {
        input_size: 64,
        ..NetConfig::reference(BackboneKind::ResnetLike, AblationVariant::Hfs)
    };
    let g = backbone_graph(&cfg).unwrap();
    let taps = g.taps.pyramid.clone();
    let model = Model::new(g, 1);
    let out = model.forward_layers(&image(64, 2), &taps, BnMode::Train).unwrap();
    assert_eq!(out[0].shape(), shape(1, 64, 32, 32));
    assert_eq!(out[4].shape(), shape(1, 2048, 2, 2));
    assert!(out.iter().all(Tensor::all_finite));
}

#[test]
fn indivisible_input_is_rejected() {
    let cfg = NetConfig {
        input_size: 100,
        ..NetConfig::desk(BackboneKind::ResnetLike, AblationVariant::SrNet)
    };
    assert!(build_network(&cfg).is_err());
    assert!(backbone_graph(&cfg).is_err());
}

#[test]
fn fusion_output_and_level4_concat() {
    let g = graph(BackboneKind::ResnetLike, AblationVariant::Hfs);
    assert_eq!(g.layer(g.taps.fused.unwrap()).out_shape, shape(1, 128, 160, 160));
    assert_eq!(g.find("fusion.cat4").unwrap().out_shape.c, 512);
    let widths: Vec<usize> = (1..=5)
        .map(|i| g.find(&format!("fusion.lateral{i}")).unwrap().out_shape.c)
        .collect();
    assert_eq!(widths, vec![64, 128, 256, 256, 256]);
    let fused: Vec<usize> = (1..=4)
        .map(|i| g.find(&format!("fusion.fuse{i}")).unwrap().out_shape.c)
        .collect();
    assert_eq!(fused, vec![128, 128, 256, 256]);

    let v = graph(BackboneKind::VggLike, AblationVariant::Hfs);
    let widths: Vec<usize> = (1..=5)
        .map(|i| v.find(&format!("fusion.lateral{i}")).unwrap().out_shape.c)
        .collect();
    assert_eq!(widths, vec![128, 128, 256, 256, 256]);
}

#[test]
fn reasoning_counts_and_shape() {
    let r = graph(BackboneKind::ResnetLike, AblationVariant::SrNet);
    assert_eq!((r.sr_unit_count(), r.depthwise_count()), (4, 8));
    assert_eq!(r.layer(r.taps.reasoned.unwrap()).out_shape, shape(1, 32, 160, 160));
    let v = graph(BackboneKind::VggLike, AblationVariant::SrNet);
    assert_eq!((v.sr_unit_count(), v.depthwise_count()), (13, 26));

    let rg = reasoning_graph(shape(1, 128, 160, 160), &ReasoningConfig::resnet_reference()).unwrap();
    assert_eq!(rg.output_shape(), shape(1, 32, 160, 160));
}

#[test]
fn reasoning_forward_preserves_resolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = reasoning_graph(shape(1, 128, 12, 12), &ReasoningConfig::resnet_reference()).unwrap();
    let model = Model::new(g, 3);
    let x = Tensor::randn(shape(2, 128, 12, 12), 1.0, &mut rng);
    let mut tape = Tape::new();
    let pass = model.record(&mut tape, x, BnMode::Train).unwrap();
    assert_eq!(tape.value(pass.output).shape(), shape(2, 32, 12, 12));
}

#[test]
fn ablation_node_counts_and_params() {
    for kind in [BackboneKind::ResnetLike, BackboneKind::VggLike] {
        let counts: Vec<usize> = AblationVariant::ALL
            .iter()
            .map(|&a| graph(kind, a).layers.len())
            .collect();
        assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
        assert_eq!(counts[2], counts[3]);
        assert_eq!(graph(kind, AblationVariant::Bps).sr_unit_count(), 0);

        let bfr = build_network(&NetConfig::desk(kind, AblationVariant::Bfr)).unwrap();
        let sr = build_network(&NetConfig::desk(kind, AblationVariant::SrNet)).unwrap();
        let (pb, ps) = (Model::new(bfr.clone(), 0).params, Model::new(sr.clone(), 0).params);
        assert_eq!(pb.scalar_count(), ps.scalar_count());
        let dil = |g: &NetworkGraph| {
            g.convs()
                .filter(|(l, _)| l.component == Component::Reasoning)
                .map(|(_, s)| s.dilation)
                .max()
                .unwrap()
        };
        assert_eq!((dil(&bfr), dil(&sr)), (1, 2));
    }
}

#[test]
fn every_variant_runs_at_desk_scale() {
    let x = Tensor::stack(&[image(64, 7), image(64, 8)]).unwrap();
    for kind in [BackboneKind::ResnetLike, BackboneKind::VggLike] {
        for ablation in AblationVariant::ALL {
            let g = build_network(&NetConfig::desk(kind, ablation)).unwrap();
            let model = Model::new(g, 11);
            let p = model.forward(&x).unwrap();
            assert_eq!(p.shape(), shape(2, 2, 64, 64), "{kind} {ablation}");
            assert!(p.all_finite());
            for n in 0..2 {
                for (a, b) in p.channel(n, 0).iter().zip(p.channel(n, 1)) {
                    assert!((a + b - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn zero_classifier_gives_half() {
    let g = build_network(&NetConfig::desk(BackboneKind::ResnetLike, AblationVariant::SrNet)).unwrap();
    assert_eq!(g.output_shape(), shape(1, 2, 64, 64));
    let mut model = Model::new(g, 5);
    for (name, p) in model.params.iter_mut() {
        if name.starts_with("classifier.") {
            p.value = Tensor::zeros(p.value.shape());
        }
    }
    let s = model.predict(&image(64, 1)).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.5));
}

#[test]
fn reference_output_matches_input_size() {
    for a in AblationVariant::ALL {
        assert_eq!(graph(BackboneKind::ResnetLike, a).output_shape(), shape(1, 2, 320, 320));
        assert_eq!(graph(BackboneKind::VggLike, a).output_shape(), shape(1, 2, 320, 320));
    }
}

#[test]
fn init_is_deterministic() {
    let g = build_network(&NetConfig::desk(BackboneKind::VggLike, AblationVariant::SrNet)).unwrap();
    let a = Model::new(g.clone(), 42);
    let b = Model::new(g.clone(), 42);
    let c = Model::new(g, 43);
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
    for (name, p) in a.params.iter() {
        if name.ends_with(".bias") || name.ends_with(".beta") {
            assert!(p.value.data().iter().all(|&v| v == 0.0));
            assert!(!p.decay);
        }
        if name.ends_with(".gamma") {
            assert!(p.value.data().iter().all(|&v| v == 1.0));
        }
    }
}

#[test]
fn depth_sweep_counts_are_exact() {
    let base = ReasoningConfig::resnet_reference();
    for d in [1, 2, 3, 9, 12, 18, 24, 39] {
        let cfg = ReasoningConfig::for_depthwise_layers(d, &base).unwrap();
        let g = reasoning_graph(shape(1, 128, 8, 8), &cfg).unwrap();
        assert_eq!(g.depthwise_count(), d);
    }
}

#[test]
fn manifest_round_trip() {
    for a in AblationVariant::ALL {
        let g = graph(BackboneKind::VggLike, a);
        let text = g.to_manifest();
        let back = NetworkGraph::from_manifest(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_manifest(), text);
    }
}

#[test]
fn sr_unit_preserves_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SRUnitConfig::new(64, 64);
    let g = sr_unit_graph(shape(1, 64, 8, 8), &cfg).unwrap();
    assert_eq!(g.output_shape(), shape(1, 64, 8, 8));
    let model = Model::new(g, 1);
    let x = Tensor::randn(shape(1, 64, 8, 8), 1.0, &mut rng);
    assert_eq!(model.forward(&x).unwrap().shape(), x.shape());

    assert!(sr_unit_graph(shape(1, 64, 8, 8), &SRUnitConfig::new(64, 30)).is_err());
    assert!(sr_unit_graph(shape(1, 60, 8, 8), &SRUnitConfig::new(64, 64)).is_err());
}

#[test]
fn degenerate_unit_is_split_concat() {
    let mut cfg = SRUnitConfig::new(16, 16);
    cfg.shuffle_groups = 1;
    let g = sr_unit_graph(shape(1, 16, 5, 5), &cfg).unwrap();
    let mut model = Model::new(g, 0);
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
    for name in names {
        let p = model.params.get_mut(&name).unwrap();
        if !name.ends_with(".weight") {
            continue;
        }
        let s = p.value.shape();
        let mut w = Tensor::zeros(s);
        let centre = (s.h / 2) * s.w + s.w / 2;
        for o in 0..s.n {
            // identity within each group: output o reads local input o mod cin_g
            let i = o % s.c;
            w.data_mut()[(o * s.c + i) * s.h * s.w + centre] = 1.0;
        }
        p.value = w;
    }
    let stat_names: Vec<String> = model.params.stats_iter().map(|(n, _)| n.clone()).collect();
    for n in stat_names {
        let st = model.params.stats_mut(&n).unwrap();
        st.var.iter_mut().for_each(|v| *v = 1.0 - BN_EPS);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::rand_uniform(shape(1, 16, 5, 5), 0.0, 1.0, &mut rng);
    let y = model.forward(&x).unwrap();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn sr_unit_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = SRUnitConfig {
        dilation_branch1: 2,
        ..SRUnitConfig::new(64, 64)
    };
    let g = sr_unit_graph(shape(1, 64, 8, 8), &cfg).unwrap();
    let model = Model::new(g, 8);
    let x = Tensor::randn(shape(1, 64, 8, 8), 1.0, &mut rng);
    let mut tape = Tape::new();
    let pass = model.record(&mut tape, x, BnMode::Train).unwrap();
    let weights = Tensor::randn(tape.value(pass.output).shape(), 1.0, &mut rng);
    let loss = tape.weighted_sum(pass.output, weights).unwrap();
    let opts = GradCheckOptions {
        epsilon: 1e-4,
        max_coords_per_param: Some(64),
        seed: 1,
    };
    let report = finite_diff_check_with(&mut tape, loss, &opts).unwrap();
    assert!(report.checked > 200);
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}
