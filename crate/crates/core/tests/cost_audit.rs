use srnet_core::cost::{cost_report, count_params, reasoning_receptive_field, receptive_fields_from};
use srnet_core::nnops::ConvSpec;
use srnet_core::srnet::{build_network, AblationVariant, BackboneKind, Component, GraphBuilder, NetConfig, ParamStore};
use srnet_core::Shape;

/// SR-units of the reference ResNet-like stack, summed by hand:
/// 128->64: 1088 + 352 + 320 + 1408 + 1088 = 4256
/// 64->48:   432 + 264 + 192 +  704 +  432 = 2024
/// 48->32:   224 + 176 +  96 +  528 +  224 = 1248
/// 32->32:    96 + 176 +  96 +  176 +   96 =  640
const SRNET_R_REASONING_PARAMS: u64 = 8168;

fn reference(kind: BackboneKind, ablation: AblationVariant) -> srnet_core::srnet::NetworkGraph {
    build_network(&NetConfig::reference(kind, ablation)).unwrap()
}

#[test]
fn closed_form_examples() {
    assert_eq!(ConvSpec::pointwise(64, 64, 4).param_count(), 1024);
    assert_eq!(ConvSpec::depthwise(64, 1).param_count(), 576);
}

#[test]
fn reasoning_params_match_hand_sum() {
    let g = reference(BackboneKind::ResnetLike, AblationVariant::SrNet);
    let report = cost_report(&g, g.input_shape()).unwrap();
    assert_eq!(report.component(Component::Reasoning).params, SRNET_R_REASONING_PARAMS);
}

#[test]
fn flop_ratios_are_exact() {
    let out = Shape::new(1, 64, 20, 20).unwrap();
    for g in [1, 2, 4, 8, 16, 32, 64] {
        let standard = ConvSpec::new(64, 64, 3).with_padding(1);
        let grouped = standard.with_groups(g);
        assert_eq!(standard.mult_adds(out), g as u64 * grouped.mult_adds(out));
        assert_eq!(standard.param_count(), g as u64 * grouped.param_count());
    }
    for c in [4, 16, 48, 64] {
        let o = Shape::new(1, c, 9, 9).unwrap();
        let standard = ConvSpec::new(c, c, 3).with_padding(1);
        let dw = ConvSpec::depthwise(c, 1);
        assert_eq!(standard.mult_adds(o), c as u64 * dw.mult_adds(o));
    }
}

#[test]
fn reasoning_share_is_small_at_320() {
    let g = reference(BackboneKind::ResnetLike, AblationVariant::SrNet);
    let report = cost_report(&g, Shape::new(1, 3, 320, 320).unwrap()).unwrap();
    let share = report.mult_add_share(Component::Reasoning);
    assert!(share > 0.0 && share < 0.15, "share {share}");
}

#[test]
fn bfr_and_srnet_differ_only_in_receptive_field() {
    for kind in [BackboneKind::ResnetLike, BackboneKind::VggLike] {
        let sr = reference(kind, AblationVariant::SrNet);
        let bfr = reference(kind, AblationVariant::Bfr);
        let (a, b) = (
            cost_report(&sr, sr.input_shape()).unwrap().total(),
            cost_report(&bfr, bfr.input_shape()).unwrap().total(),
        );
        assert_eq!(a.params, b.params);
        assert_eq!(a.mult_adds, b.mult_adds);
        let (rs, rb) = (reasoning_receptive_field(&sr).unwrap(), reasoning_receptive_field(&bfr).unwrap());
        assert!(rs > rb, "{kind:?}: {rs} vs {rb}");
    }
}

#[test]
fn count_params_equals_optimizer_scalars() {
    for kind in [BackboneKind::ResnetLike, BackboneKind::VggLike] {
        for ablation in AblationVariant::ALL {
            for cfg in [NetConfig::reference(kind, ablation), NetConfig::desk(kind, ablation)] {
                let g = build_network(&cfg).unwrap();
                let store = ParamStore::init(&g, 0);
                assert_eq!(count_params(&g), store.scalar_count() as u64, "{kind:?} {ablation:?}");
            }
        }
    }
}

#[test]
fn totals_equal_sum_of_rows_and_are_deterministic() {
    let g = reference(BackboneKind::VggLike, AblationVariant::Hfs);
    let report = cost_report(&g, g.input_shape()).unwrap();
    for c in Component::ALL {
        let rows = report.rows.iter().filter(|r| r.component == c);
        let (p, m, b) = rows.fold((0, 0, 0), |(p, m, b), r| (p + r.params, m + r.mult_adds, b + r.bytes_moved));
        let t = report.component(c);
        assert_eq!((t.params, t.mult_adds, t.bytes_moved), (p, m, b), "{c:?}");
    }
    assert_eq!(report, cost_report(&g, g.input_shape()).unwrap());
    assert_eq!(report.to_csv(), cost_report(&g, g.input_shape()).unwrap().to_csv());
}

#[test]
fn movement_ops_cost_no_mult_adds() {
    let g = reference(BackboneKind::ResnetLike, AblationVariant::SrNet);
    let report = cost_report(&g, g.input_shape()).unwrap();
    for r in &report.rows {
        if matches!(r.kind, "upsample" | "shuffle" | "concat") {
            assert_eq!(r.mult_adds, 0, "{}", r.name);
            assert!(r.bytes_moved > 0, "{}", r.name);
        }
    }
}

#[test]
fn dilated_chain_receptive_field() {
    let mut b = GraphBuilder::new(Shape::new(1, 4, 32, 32).unwrap());
    let mut x = b.input();
    let mut want = 1.0;
    for (i, d) in [1usize, 2, 4, 1].into_iter().enumerate() {
        x = b.conv(format!("c{i}"), x, ConvSpec::new(4, 4, 3).with_padding(d).with_dilation(d)).unwrap();
        want += 2.0 * d as f64;
    }
    let g = b.finish(x, None, None);
    let rf = receptive_fields_from(&g, 0)[x].unwrap();
    assert_eq!(rf.size, want);
    assert_eq!(rf.jump, 1.0);
    assert!(!rf.branched);
}
