//! PNG overlays: grain boxes with ids, and chalk masks.

use image::{Rgb, RgbImage};

use crate::chalk::ChalkMask;
use crate::geometry;
use crate::imgproc::{GrayImage, Raster};
use crate::segmentation::Grain;

const BOX: Rgb<u8> = Rgb([255, 40, 40]);
const LABEL: Rgb<u8> = Rgb([255, 230, 0]);
const OUTLINE: Rgb<u8> = Rgb([220, 30, 30]);

// 3x5 digit glyphs, one row per entry, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_number(img: &mut RgbImage, x: i64, y: i64, n: usize, scale: i64, c: Rgb<u8>) {
    for (k, ch) in n.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let ox = x + k as i64 * 4 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            put(img, ox + col * scale + dx, y + row as i64 * scale + dy, c);
                        }
                    }
                }
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// The grayscale input with every grain's bounding box and id drawn on top.
pub fn annotate_grains(img: &GrayImage, grains: &[Grain]) -> RgbImage {
    let mut out = RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    let scale = ((img.width().min(img.height()) / 200) as i64).max(1);
    for g in grains {
        let b = g.bbox;
        let (x0, y0) = (b.x as i64, b.y as i64);
        let (x1, y1) = (x0 + b.w as i64 - 1, y0 + b.h as i64 - 1);
        draw_line(&mut out, (x0, y0), (x1, y0), BOX);
        draw_line(&mut out, (x1, y0), (x1, y1), BOX);
        draw_line(&mut out, (x1, y1), (x0, y1), BOX);
        draw_line(&mut out, (x0, y1), (x0, y0), BOX);
        draw_number(&mut out, x0 + 2, y0 + 2, g.component_id, scale, LABEL);
    }
    out
}

/// Chalky pixels black, other grain pixels white, background gray. With
/// `outline`, the convex hull of each grain's chalky pixels is traced.
pub fn chalk_overlay(width: usize, height: usize, grains: &[Grain], masks: &[ChalkMask], outline: bool) -> RgbImage {
    let mut out = RgbImage::from_pixel(width as u32, height as u32, Rgb([128, 128, 128]));
    for (g, m) in grains.iter().zip(masks) {
        for (&i, &chalky) in g.pixel_indices.iter().zip(&m.chalky) {
            let v = if chalky { 0 } else { 255 };
            put(&mut out, (i % width) as i64, (i / width) as i64, Rgb([v, v, v]));
        }
        if outline {
            let pts: Vec<geometry::Point> =
                m.chalky_indices(g).map(|i| ((i % width) as i64, (i / width) as i64)).collect();
            let hull = geometry::convex_hull(&pts);
            for k in 0..hull.len() {
                draw_line(&mut out, hull[k], hull[(k + 1) % hull.len()], OUTLINE);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chalk::{segment_chalk, ChalkParams};
    use crate::segmentation::{detect_grains, DetectConfig};

    #[test]
    fn overlays_render() {
        let img = GrayImage::from_fn(60, 40, 0.05, |x, y| {
            if (10..50).contains(&x) && (10..30).contains(&y) {
                if x < 20 {
                    250
                } else {
                    150
                }
            } else {
                10
            }
        })
        .unwrap();
        let grains = detect_grains(&img, &DetectConfig::default()).unwrap();
        assert_eq!(grains.len(), 1);
        let annotated = annotate_grains(&img, &grains);
        assert_eq!(annotated.get_pixel(10, 10), &BOX);

        let masks: Vec<_> = grains.iter().map(|g| segment_chalk(g, &img, &ChalkParams::default()).unwrap()).collect();
        let chalk = chalk_overlay(60, 40, &grains, &masks, false);
        assert_eq!(chalk.get_pixel(0, 0), &Rgb([128, 128, 128]));
        assert_eq!(chalk.get_pixel(15, 20), &Rgb([0, 0, 0]));
        assert_eq!(chalk.get_pixel(40, 20), &Rgb([255, 255, 255]));
        let outlined = chalk_overlay(60, 40, &grains, &masks, true);
        assert_eq!(outlined.get_pixel(10, 20), &OUTLINE);
    }
}
