use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srnet_core::nnops::{concat_channels, conv2d, slice_channels, ConvSpec};
use srnet_core::{Shape, Tensor};

/// Direct definition: seven nested loops over (n, o, y, x, i, ky, kx).
fn naive_conv(x: &Tensor, spec: &ConvSpec, w: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let s = x.shape();
    let (kh, kw) = spec.kernel;
    let eff_h = spec.dilation * (kh - 1) + 1;
    let eff_w = spec.dilation * (kw - 1) + 1;
    let oh = (s.h + 2 * spec.padding - eff_h) / spec.stride + 1;
    let ow = (s.w + 2 * spec.padding - eff_w) / spec.stride + 1;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let mut out = Tensor::zeros(Shape::new(s.n, spec.out_channels, oh, ow).unwrap());
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            let g = o / cout_g;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b.data()[o]);
                    for i in 0..cin_g {
                        let c = g * cin_g + i;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                                let ix = (xx * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                let xv = x.get(n, c, iy as usize, ix as usize);
                                let wv = w.data()[((o * cin_g + i) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.set(n, o, y, xx, acc);
                }
            }
        }
    }
    out
}

fn random_case(rng: &mut ChaCha8Rng) -> (ConvSpec, Shape) {
    loop {
        let groups = [1, 1, 2, 3, 4][rng.random_range(0..5)];
        let depthwise = rng.random_bool(0.25);
        let (cin, cout, groups) = if depthwise {
            let c = rng.random_range(1..=8);
            (c, c, c)
        } else {
            (groups * rng.random_range(1..=3), groups * rng.random_range(1..=3), groups)
        };
        let k = [1, 2, 3, 5][rng.random_range(0..4)];
        let spec = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: (k, if rng.random_bool(0.8) { k } else { rng.random_range(1..=3) }),
            stride: rng.random_range(1..=3),
            padding: rng.random_range(0..=3),
            dilation: rng.random_range(1..=3),
            groups,
            has_bias: rng.random_bool(0.5),
        };
        let shape = Shape::new(rng.random_range(1..=2), cin, rng.random_range(3..=11), rng.random_range(3..=11)).unwrap();
        if spec.output_shape(shape).is_ok() {
            return (spec, shape);
        }
    }
}

#[test]
fn matches_naive_oracle_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut kinds = [0usize; 3];
    for _ in 0..200 {
        let (spec, shape) = random_case(&mut rng);
        kinds[if spec.is_depthwise() { 2 } else if spec.groups > 1 { 1 } else { 0 }] += 1;
        let x = Tensor::randn(shape, 1.0, &mut rng);
        let w = Tensor::randn(spec.weight_shape(), 1.0, &mut rng);
        let b = spec.has_bias.then(|| Tensor::randn(spec.bias_shape(), 1.0, &mut rng));
        let fast = conv2d(&x, &spec, &w, b.as_ref()).unwrap();
        let slow = naive_conv(&x, &spec, &w, b.as_ref());
        assert_eq!(fast.shape(), slow.shape(), "{spec:?}");
        for (a, e) in fast.data().iter().zip(slow.data()) {
            worst = worst.max((a - e).abs());
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst}");
    assert!(kinds.iter().all(|&k| k >= 20), "taxonomy coverage {kinds:?}");
}

#[test]
fn frozen_reference_values() {
    // 3x3 input, 2x2 kernel, dilation 1, pad 0: computed by hand
    let x = Tensor::new(Shape::new(1, 1, 3, 3).unwrap(), (1..=9).map(f64::from).collect::<Vec<f64>>()).unwrap();
    let w = Tensor::new(Shape::new(1, 1, 2, 2).unwrap(), vec![1.0, 0.0, 0.0, -1.0]).unwrap();
    let spec = ConvSpec::new(1, 1, 2);
    let y = conv2d(&x, &spec, &w, None).unwrap();
    assert_eq!(y.data(), &[-4.0, -4.0, -4.0, -4.0]);
    // dilation 2 on the same input picks corners: 1 - 9
    let y = conv2d(&x, &spec.with_dilation(2), &w, None).unwrap();
    assert_eq!(y.data(), &[-8.0]);
    assert_eq!(naive_conv(&x, &spec.with_dilation(2), &w, None).data(), &[-8.0]);
}

#[test]
fn grouped_equals_independent_convs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (g, cin_g, cout_g) = (4, 3, 2);
    let spec = ConvSpec::new(g * cin_g, g * cout_g, 3).with_padding(2).with_dilation(2).with_groups(g);
    let x = Tensor::randn(Shape::new(2, g * cin_g, 7, 6).unwrap(), 1.0, &mut rng);
    let w = Tensor::randn(spec.weight_shape(), 1.0, &mut rng);
    let y = conv2d(&x, &spec, &w, None).unwrap();

    let sub = ConvSpec::new(cin_g, cout_g, 3).with_padding(2).with_dilation(2);
    let per = cout_g * cin_g * 9;
    let mut parts: Option<Tensor> = None;
    for k in 0..g {
        let xs = slice_channels(&x, k * cin_g, cin_g).unwrap();
        let ws = Tensor::new(sub.weight_shape(), w.data()[k * per..(k + 1) * per].to_vec()).unwrap();
        let ys = conv2d(&xs, &sub, &ws, None).unwrap();
        parts = Some(match parts {
            None => ys,
            Some(p) => concat_channels(&p, &ys).unwrap(),
        });
    }
    assert_eq!(parts.unwrap(), y);
}
