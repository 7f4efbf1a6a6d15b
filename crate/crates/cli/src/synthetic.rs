//! Synthetic saliency dataset: bright shapes on textured, darker backgrounds.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use srnet_core::training::Sample;
use srnet_core::{Shape, Tensor};

use crate::pnm;
use crate::CliError;

pub const MIN_SIZE: usize = 32;

#[derive(Debug, Clone, Copy)]
enum Figure {
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, theta: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64 },
    Triangle { p: [(f64, f64); 3] },
}

impl Figure {
    fn draw<R: Rng>(rng: &mut R, size: f64) -> Self {
        let cx = rng.random_range(0.2..0.8) * size;
        let cy = rng.random_range(0.2..0.8) * size;
        match rng.random_range(0..3) {
            0 => Figure::Ellipse {
                cx,
                cy,
                a: rng.random_range(0.08..0.22) * size,
                b: rng.random_range(0.08..0.22) * size,
                theta: rng.random_range(0.0..PI),
            },
            1 => Figure::Rect {
                cx,
                cy,
                hw: rng.random_range(0.07..0.2) * size,
                hh: rng.random_range(0.07..0.2) * size,
            },
            _ => {
                let start = rng.random_range(0.0..2.0 * PI);
                let mut p = [(0.0, 0.0); 3];
                for (k, v) in p.iter_mut().enumerate() {
                    let ang = start + k as f64 * 2.0 * PI / 3.0 + rng.random_range(-0.4..0.4);
                    let r = rng.random_range(0.12..0.28) * size;
                    *v = (cx + r * ang.cos(), cy + r * ang.sin());
                }
                Figure::Triangle { p }
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Figure::Ellipse { cx, cy, a, b, theta } => {
                let (s, c) = theta.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Figure::Rect { cx, cy, hw, hh } => (x - cx).abs() <= hw && (y - cy).abs() <= hh,
            Figure::Triangle { p } => {
                let side = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let d = [side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0])];
                d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
            }
        }
    }
}

/// The `index`-th sample of the dataset identified by `seed`.
pub fn sample(size: usize, seed: u64, index: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let s = size as f64;

    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.08..0.35));
    let freq = rng.random_range(2.0..6.0) * 2.0 * PI / s;
    let (phase_x, phase_y) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let figures: Vec<(Figure, [f64; 3])> = (0..rng.random_range(1..=3))
        .map(|_| {
            let fig = Figure::draw(&mut rng, s);
            let colour = std::array::from_fn(|_| rng.random_range(0.6..1.0));
            (fig, colour)
        })
        .collect();
    let noise = Normal::new(0.0, 0.03).expect("valid std");

    let plane = size * size;
    let mut image = vec![0.0; 3 * plane];
    let mut mask = vec![0.0; plane];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let texture = 0.06 * ((freq * px + phase_x).sin() * (freq * py + phase_y).cos());
            let hit = figures.iter().rev().find(|(f, _)| f.contains(px, py));
            let k = y * size + x;
            if hit.is_some() {
                mask[k] = 1.0;
            }
            for c in 0..3 {
                let v = match hit {
                    Some((_, colour)) => colour[c],
                    None => base[c] + texture,
                };
                image[c * plane + k] = (v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    let image = Tensor::new(Shape { n: 1, c: 3, h: size, w: size }, image).expect("image shape");
    let mask = Tensor::new(Shape { n: 1, c: 1, h: size, w: size }, mask).expect("mask shape");
    Sample::new(image, mask).expect("binary mask")
}

pub fn dataset(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    range(0, n, size, seed)
}

/// Samples `start..start + n`; disjoint ranges of one seed never overlap.
pub fn range(start: usize, n: usize, size: usize, seed: u64) -> Vec<Sample> {
    (start..start + n).map(|i| sample(size, seed, i as u64)).collect()
}

pub fn check_request(n: usize, size: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Validation("sample count must be at least 1".into()));
    }
    if size < MIN_SIZE {
        return Err(CliError::Validation(format!("image size {size} is below the minimum {MIN_SIZE}")));
    }
    Ok(())
}

pub fn image_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("images").join(format!("{i:05}.ppm"))
}

pub fn mask_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("masks").join(format!("{i:05}.pgm"))
}

/// Write `n` samples as `images/NNNNN.ppm` and `masks/NNNNN.pgm` under `dir`.
pub fn generate(dir: &Path, n: usize, size: usize, seed: u64) -> Result<(), CliError> {
    check_request(n, size)?;
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    }
    for i in 0..n {
        let s = sample(size, seed, i as u64);
        pnm::save(&image_path(dir, i), &s.image)?;
        pnm::save(&mask_path(dir, i), &s.mask)?;
    }
    Ok(())
}
