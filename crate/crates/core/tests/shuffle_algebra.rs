use srnet_core::nnops::{channel_shuffle, shuffle_index};
use srnet_core::{Shape, Tensor};

fn labelled(c: usize) -> Tensor {
    // Each channel holds a distinct value pattern.
    let s = Shape::new(2, c, 2, 3).unwrap();
    let data = (0..s.numel()).map(|k| (k as f64).sin() * 1e3 + k as f64).collect::<Vec<f64>>();
    Tensor::new(s, data).unwrap()
}

#[test]
fn shuffle_is_a_permutation_with_inverse() {
    let mut pairs = 0;
    for c in (4..=64).step_by(4) {
        let x = labelled(c);
        for g in (1..=c).filter(|g| c % g == 0) {
            let y = channel_shuffle(&x, g).unwrap();
            let mut before: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let mut after: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            before.sort_unstable();
            after.sort_unstable();
            assert_eq!(before, after, "C={c} g={g}");

            let mut seen = vec![false; c];
            for k in 0..c {
                seen[shuffle_index(k, c, g)] = true;
            }
            assert!(seen.iter().all(|&s| s), "C={c} g={g}");

            let back = channel_shuffle(&y, c / g).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&x), "C={c} g={g}");
            pairs += 1;
        }
    }
    assert!(pairs > 100);
}

#[test]
fn invalid_groups_rejected() {
    assert!(channel_shuffle(&labelled(12), 5).is_err());
    assert!(channel_shuffle(&labelled(12), 0).is_err());
}
