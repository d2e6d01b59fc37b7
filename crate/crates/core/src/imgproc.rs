//! Grayscale preprocessing chain.
//!
//! Every operation is a pure function that preserves width, height and
//! calibration of its input.

use std::collections::VecDeque;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major 8-bit grayscale raster with a physical scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    calibration_mm_per_px: f64,
}

/// Row-major foreground/background mask with a physical scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    calibration_mm_per_px: f64,
}

fn check_dims(width: usize, height: usize, len: usize, calibration: f64) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyInput("image has zero width or height"));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "{width}x{height} image needs {} pixels, got {len}",
            width.saturating_mul(height)
        )));
    }
    if !(calibration.is_finite() && calibration > 0.0) {
        return Err(Error::invalid(format!("calibration must be positive, got {calibration}")));
    }
    Ok(())
}

/// Shared raster accessors for [`GrayImage`] and [`BinaryImage`].
pub trait Raster: Sized {
    type Pixel: Copy + Ord;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixels(&self) -> &[Self::Pixel];
    fn calibration_mm_per_px(&self) -> f64;
    /// Same geometry and calibration, new pixel values.
    fn with_pixels(&self, pixels: Vec<Self::Pixel>) -> Self;

    fn get(&self, x: usize, y: usize) -> Self::Pixel {
        self.pixels()[y * self.width() + x]
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, calibration_mm_per_px: f64) -> Result<Self> {
        check_dims(width, height, pixels.len(), calibration_mm_per_px)?;
        Ok(Self { width, height, pixels, calibration_mm_per_px })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        calibration_mm_per_px: f64,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels, calibration_mm_per_px)
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn with_calibration(mut self, calibration_mm_per_px: f64) -> Result<Self> {
        check_dims(self.width, self.height, self.pixels.len(), calibration_mm_per_px)?;
        self.calibration_mm_per_px = calibration_mm_per_px;
        Ok(self)
    }

    /// Decodes PNG or PGM bytes. Single-channel images are taken as-is;
    /// colour images go through [`to_grayscale`].
    pub fn decode(bytes: &[u8], calibration_mm_per_px: f64) -> Result<Self> {
        let reader = image::ImageReader::new(Cursor::new(bytes)).with_guessed_format()?;
        match reader.format() {
            Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
            other => {
                return Err(Error::invalid(format!("unsupported image format {other:?}")));
            }
        }
        Self::from_dynamic(reader.decode()?, calibration_mm_per_px)
    }

    pub fn open(path: impl AsRef<Path>, calibration_mm_per_px: f64) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes, calibration_mm_per_px)
    }

    pub fn from_dynamic(img: DynamicImage, calibration_mm_per_px: f64) -> Result<Self> {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                Self::new(w, h, g.into_raw(), calibration_mm_per_px)
            }
            other => to_grayscale(&other.to_rgb8(), calibration_mm_per_px),
        }
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_with_format(path, ImageFormat::Png)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_image().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}

impl Raster for GrayImage {
    type Pixel = u8;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    fn calibration_mm_per_px(&self) -> f64 {
        self.calibration_mm_per_px
    }
    fn with_pixels(&self, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), self.pixels.len());
        Self { width: self.width, height: self.height, pixels, calibration_mm_per_px: self.calibration_mm_per_px }
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>, calibration_mm_per_px: f64) -> Result<Self> {
        check_dims(width, height, pixels.len(), calibration_mm_per_px)?;
        Ok(Self { width, height, pixels, calibration_mm_per_px })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        calibration_mm_per_px: f64,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, pixels, calibration_mm_per_px)
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Foreground white, background black.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| if p { 255 } else { 0 }).collect(),
            calibration_mm_per_px: self.calibration_mm_per_px,
        }
    }
}

impl Raster for BinaryImage {
    type Pixel = bool;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[bool] {
        &self.pixels
    }
    fn calibration_mm_per_px(&self) -> f64 {
        self.calibration_mm_per_px
    }
    fn with_pixels(&self, pixels: Vec<bool>) -> Self {
        assert_eq!(pixels.len(), self.pixels.len());
        Self { width: self.width, height: self.height, pixels, calibration_mm_per_px: self.calibration_mm_per_px }
    }
}

/// Standard-definition luma of one RGB pixel.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_grayscale(image: &RgbImage, calibration_mm_per_px: f64) -> Result<GrayImage> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::EmptyInput("zero-sized RGB image"));
    }
    let pixels = image.pixels().map(|p| luma(p[0], p[1], p[2])).collect();
    GrayImage::new(image.width() as usize, image.height() as usize, pixels, calibration_mm_per_px)
}

/// Remaps `[min, max]` onto `[0, 255]` through a 256-entry lookup table.
/// A constant image is returned unchanged.
pub fn contrast_stretch(img: &GrayImage) -> GrayImage {
    let lo = *img.pixels.iter().min().expect("non-empty by construction");
    let hi = *img.pixels.iter().max().expect("non-empty by construction");
    if hi == lo {
        return img.clone();
    }
    let span = (hi - lo) as f64;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate().skip(lo as usize).take((hi - lo) as usize + 1) {
        *slot = ((v as f64 - lo as f64) * 255.0 / span).round() as u8;
    }
    img.with_pixels(img.pixels.iter().map(|&p| lut[p as usize]).collect())
}

/// Multiplicative gain per brightness level 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessSchedule {
    pub gains: [f64; 5],
}

impl Default for BrightnessSchedule {
    fn default() -> Self {
        Self { gains: [1.00, 1.25, 1.50, 1.75, 2.00] }
    }
}

impl BrightnessSchedule {
    pub const LEVELS: std::ops::RangeInclusive<u8> = 1..=5;

    /// Gains must be positive and non-decreasing so that brighter levels never
    /// darken a pixel.
    pub fn new(gains: [f64; 5]) -> Result<Self> {
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) || gains.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid(format!("brightness gains must be positive and non-decreasing, got {gains:?}")));
        }
        Ok(Self { gains })
    }

    pub fn gain(&self, level: u8) -> Result<f64> {
        if !Self::LEVELS.contains(&level) {
            return Err(Error::OutOfRange { what: "brightness level", value: level as i64, range: "1..=5".into() });
        }
        Ok(self.gains[level as usize - 1])
    }

    /// Brightened value of a single pixel.
    pub fn apply_pixel(&self, p: u8, level: u8) -> Result<u8> {
        let g = self.gain(level)?;
        Ok(scale(p, g))
    }

    pub fn apply(&self, img: &GrayImage, level: u8) -> Result<GrayImage> {
        let g = self.gain(level)?;
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = scale(v as u8, g);
        }
        Ok(img.with_pixels(img.pixels.iter().map(|&p| lut[p as usize]).collect()))
    }
}

fn scale(p: u8, gain: f64) -> u8 {
    (p as f64 * gain).round().clamp(0.0, 255.0) as u8
}

/// Brightness adjustment with the default gain schedule.
pub fn adjust_brightness(img: &GrayImage, level: u8) -> Result<GrayImage> {
    BrightnessSchedule::default().apply(img, level)
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in &img.pixels {
        h[p as usize] += 1;
    }
    h
}

/// Otsu threshold: pixels `>= t` are foreground.
///
/// The split maximising between-class variance puts values `<= k` in the
/// background, so the returned threshold is `k + 1`. On a single-level image
/// every pixel is background (unless that level is 255).
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let hist = histogram(img);
    let total = img.pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best: Option<(f64, usize)> = None;
    let (mut w0, mut sum0) = (0.0, 0.0);
    for (k, &count) in hist.iter().enumerate().take(255) {
        w0 += count as f64;
        sum0 += k as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, k));
        }
    }
    match best {
        Some((_, k)) => (k + 1) as u8,
        None => {
            let level = img.pixels[0];
            level.saturating_add(1)
        }
    }
}

/// Thresholds the image; `None` selects Otsu's threshold. Returns the mask
/// and the threshold that was used.
pub fn binarize(img: &GrayImage, threshold: Option<u8>) -> (BinaryImage, u8) {
    let t = threshold.unwrap_or_else(|| otsu_threshold(img));
    let bin = BinaryImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| p >= t).collect(),
        calibration_mm_per_px: img.calibration_mm_per_px,
    };
    (bin, t)
}

/// 8-connected foreground components in raster discovery order. Each
/// component lists its linear pixel indices in ascending order.
pub fn foreground_components(img: &BinaryImage) -> Vec<Vec<usize>> {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; img.pixels.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..img.pixels.len() {
        if !img.pixels[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if img.pixels[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Clears every 8-connected foreground component with fewer than
/// `min_area_px` pixels.
pub fn remove_small_regions(img: &BinaryImage, min_area_px: usize) -> Result<BinaryImage> {
    if min_area_px == 0 {
        return Err(Error::invalid("min_area_px must be at least 1"));
    }
    let mut pixels = img.pixels.clone();
    for comp in foreground_components(img) {
        if comp.len() < min_area_px {
            for i in comp {
                pixels[i] = false;
            }
        }
    }
    Ok(img.with_pixels(pixels))
}

pub const DEFAULT_MIN_REGION_AREA_PX: usize = 40_000;

/// Median over a `window x window` neighbourhood with edge replication.
pub fn median_filter<R: Raster>(img: &R, window: usize) -> Result<R> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("median window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as isize;
    let src = img.pixels();
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h as isize {
        for x in 0..w as isize {
            buf.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    buf.push(src[yy * w + xx]);
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable(mid);
            out.push(*m);
        }
    }
    Ok(img.with_pixels(out))
}
