//! Synthetic grain images shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ricegrade_core::imgproc::GrayImage;

pub const BACKGROUND: u8 = 20;
pub const GRAIN: u8 = 150;
pub const CHALK: u8 = 240;
pub const CAL: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct SynthGrain {
    pub cx: f64,
    pub cy: f64,
    pub length_mm: f64,
    pub width_mm: f64,
    pub angle: f64,
    /// Area fraction of the concentric chalky core.
    pub chalk: f64,
}

impl SynthGrain {
    pub fn new(cx: f64, cy: f64, length_mm: f64, width_mm: f64) -> Self {
        Self { cx, cy, length_mm, width_mm, angle: 0.0, chalk: 0.0 }
    }

    pub fn angle(self, angle: f64) -> Self {
        Self { angle, ..self }
    }

    pub fn chalk(self, chalk: f64) -> Self {
        Self { chalk, ..self }
    }

    /// Normalized squared radius of pixel (x, y); <= 1 inside the grain.
    fn radius2(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (self.length_mm / CAL / 2.0, self.width_mm / CAL / 2.0);
        let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / a;
        let v = (-dx * s + dy * c) / b;
        u * u + v * v
    }
}

pub fn render(width: usize, height: usize, grains: &[SynthGrain]) -> GrayImage {
    GrayImage::from_fn(width, height, CAL, |x, y| {
        let mut p = BACKGROUND;
        for g in grains {
            let r2 = g.radius2(x, y);
            if r2 <= 1.0 {
                p = if r2 <= g.chalk { CHALK } else { GRAIN };
            }
        }
        p
    })
    .unwrap()
}

/// One image of `per_image` GD-sized grains in a row, with seeded angle and
/// chalk jitter.
pub fn gd_image(rng: &mut ChaCha8Rng, per_image: usize) -> GrayImage {
    let grains: Vec<SynthGrain> = (0..per_image)
        .map(|i| {
            let chalk = if rng.random_bool(0.5) { rng.random_range(0.05..0.3) } else { 0.0 };
            SynthGrain::new(90.0 + 170.0 * i as f64, 90.0, 6.74, 1.74).angle(rng.random_range(-0.4..0.4)).chalk(chalk)
        })
        .collect();
    render(170 * per_image + 10, 180, &grains)
}

/// Writes `n` synthetic images as PNG into `dir`.
pub fn write_batch(dir: &Path, n: usize, seed: u64) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p = dir.join(format!("img_{i:03}.png"));
            gd_image(&mut rng, 4).save_png(&p).unwrap();
            p
        })
        .collect()
}
