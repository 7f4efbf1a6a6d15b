//! Horizontal flips and right-angle rotations applied jointly to image and
//! mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Shape, Tensor};
use crate::training::Sample;

/// One drawn augmentation: optional flip, then `quarter_turns` x 90 degrees
/// counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub flip: bool,
    pub quarter_turns: u8,
}

pub fn flip_horizontal(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(s);
    for (dst, src) in out.data_mut().chunks_mut(s.w).zip(x.data().chunks(s.w)) {
        for (d, v) in dst.iter_mut().zip(src.iter().rev()) {
            *d = *v;
        }
    }
    out
}

/// 90 degrees counter-clockwise: `out[i][j] = in[j][W - 1 - i]`.
pub fn rotate90(x: &Tensor) -> Tensor {
    let s = x.shape();
    let rs = Shape { h: s.w, w: s.h, ..s };
    let mut out = Tensor::zeros(rs);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.channel(n, c);
            let off = (n * s.c + c) * s.plane();
            let dst = &mut out.data_mut()[off..off + s.plane()];
            for i in 0..rs.h {
                for j in 0..rs.w {
                    dst[i * rs.w + j] = src[j * s.w + (s.w - 1 - i)];
                }
            }
        }
    }
    out
}

pub fn rotate_quarters(x: &Tensor, quarters: u8) -> Tensor {
    let mut out = x.clone();
    for _ in 0..quarters % 4 {
        out = rotate90(&out);
    }
    out
}

impl Augmentation {
    /// Flip with probability 0.5; with probability 0.5 rotate by a uniformly
    /// drawn 90, 180 or 270 degrees.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let flip = rng.random_bool(0.5);
        let quarter_turns = if rng.random_bool(0.5) { rng.random_range(1..=3) } else { 0 };
        Augmentation { flip, quarter_turns }
    }

    pub fn apply_tensor(&self, x: &Tensor) -> Tensor {
        let x = if self.flip { flip_horizontal(x) } else { x.clone() };
        rotate_quarters(&x, self.quarter_turns)
    }

    pub fn invert_tensor(&self, x: &Tensor) -> Tensor {
        let x = rotate_quarters(x, (4 - self.quarter_turns % 4) % 4);
        if self.flip {
            flip_horizontal(&x)
        } else {
            x
        }
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        Sample {
            image: self.apply_tensor(&s.image),
            mask: self.apply_tensor(&s.mask),
        }
    }

    pub fn invert(&self, s: &Sample) -> Sample {
        Sample {
            image: self.invert_tensor(&s.image),
            mask: self.invert_tensor(&s.mask),
        }
    }
}

pub fn augment(sample: &Sample, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Augmentation::draw(&mut rng).apply(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Tensor {
        Tensor::new(Shape::new(1, 1, 2, 3).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn flip_reverses_rows() {
        assert_eq!(flip_horizontal(&grid()).data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
    }

    #[test]
    fn rotate_counter_clockwise() {
        let r = rotate90(&grid());
        assert_eq!(r.shape(), Shape::new(1, 1, 3, 2).unwrap());
        assert_eq!(r.data(), &[3.0, 6.0, 2.0, 5.0, 1.0, 4.0]);
    }

    #[test]
    fn involutions() {
        let g = grid();
        assert_eq!(flip_horizontal(&flip_horizontal(&g)), g);
        let half = rotate_quarters(&g, 2);
        assert_eq!(rotate_quarters(&half, 2), g);
        assert_eq!(rotate_quarters(&g, 4), g);
    }
}
