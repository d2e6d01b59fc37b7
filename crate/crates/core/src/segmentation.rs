//! Grain extraction and morphometry.

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Point};
use crate::imgproc::{self, BinaryImage, GrayImage, Raster};
use crate::{Error, Result};

/// How long and short axes are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMethod {
    /// Sides of the minimum-area enclosing rectangle of the pixel squares.
    #[default]
    MinAreaRect,
    /// Rectangle-equivalent sides from second moments (`sqrt(12 * eigenvalue)`).
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// One extracted grain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grain {
    pub component_id: usize,
    pub bbox: BBox,
    pub pixel_count: usize,
    pub long_axis_mm: f64,
    pub short_axis_mm: f64,
    pub area_mm2: f64,
    /// Linear indices into the source image, ascending.
    #[serde(skip)]
    pub pixel_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub min_grain_area_px: usize,
    pub axis_method: AxisMethod,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { min_grain_area_px: 50, axis_method: AxisMethod::MinAreaRect }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub binarize_threshold: Option<u8>,
    pub median_window: usize,
    pub measure: MeasureOptions,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { binarize_threshold: None, median_window: 3, measure: MeasureOptions::default() }
    }
}

/// Maximal 8-connected foreground components, ordered by the top-left corner
/// of their bounding boxes (row first), then by first pixel in raster order.
pub fn label_components(img: &BinaryImage) -> Vec<Vec<usize>> {
    let w = img.width();
    let mut comps = imgproc::foreground_components(img);
    comps.sort_by_cached_key(|c| {
        let min_y = c[0] / w;
        let min_x = c.iter().map(|i| i % w).min().unwrap_or(0);
        (min_y, min_x, c[0])
    });
    comps
}

fn bbox_of(component: &[usize], image_width: usize) -> BBox {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in component {
        let (x, y) = (i % image_width, i / image_width);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    BBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 }
}

/// Corners of the outermost pixel squares of every row. Their hull equals the
/// hull of the whole component's pixel squares.
fn row_extreme_corners(component: &[usize], image_width: usize) -> Vec<Point> {
    let mut rows: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for &i in component {
        let (x, y) = (i % image_width, i / image_width);
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let mut pts = Vec::with_capacity(rows.len() * 4);
    for (y, (lo, hi)) in rows {
        let (y, lo, hi) = (y as i64, lo as i64, hi as i64 + 1);
        pts.extend([(lo, y), (lo, y + 1), (hi, y), (hi, y + 1)]);
    }
    pts
}

fn moment_axes(component: &[usize], image_width: usize) -> (f64, f64) {
    let n = component.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &i in component {
        sx += (i % image_width) as f64;
        sy += (i / image_width) as f64;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for &i in component {
        let dx = (i % image_width) as f64 - mx;
        let dy = (i / image_width) as f64 - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    // Each pixel is a unit square, which adds 1/12 variance per axis.
    let (a, b, c) = (cxx / n + 1.0 / 12.0, cyy / n + 1.0 / 12.0, cxy / n);
    let half_trace = (a + b) / 2.0;
    let disc = (((a - b) / 2.0).powi(2) + c * c).sqrt();
    let (l1, l2) = (half_trace + disc, (half_trace - disc).max(0.0));
    ((12.0 * l1).sqrt(), (12.0 * l2).sqrt())
}

/// Measures one component. Axes are in mm with `long >= short`, area is
/// `pixel_count * calibration^2`.
pub fn measure_grain(
    component_id: usize,
    component: &[usize],
    image_width: usize,
    calibration_mm_per_px: f64,
    opts: &MeasureOptions,
) -> Result<Grain> {
    if !(calibration_mm_per_px.is_finite() && calibration_mm_per_px > 0.0) {
        return Err(Error::invalid(format!("calibration must be positive, got {calibration_mm_per_px}")));
    }
    if image_width == 0 {
        return Err(Error::invalid("image width must be positive"));
    }
    let min = opts.min_grain_area_px.max(1);
    if component.len() < min {
        return Err(Error::TooSmall { pixels: component.len(), min });
    }
    let mut pixel_indices = component.to_vec();
    pixel_indices.sort_unstable();
    pixel_indices.dedup();

    let (long_px, short_px) = match opts.axis_method {
        AxisMethod::MinAreaRect => {
            let hull = geometry::convex_hull(&row_extreme_corners(&pixel_indices, image_width));
            let rect = geometry::min_area_rect(&hull).expect("pixel squares span a non-empty hull");
            (rect.long_side(), rect.short_side())
        }
        AxisMethod::Moments => moment_axes(&pixel_indices, image_width),
    };

    let pixel_count = pixel_indices.len();
    Ok(Grain {
        component_id,
        bbox: bbox_of(&pixel_indices, image_width),
        pixel_count,
        long_axis_mm: long_px * calibration_mm_per_px,
        short_axis_mm: short_px * calibration_mm_per_px,
        area_mm2: pixel_count as f64 * calibration_mm_per_px * calibration_mm_per_px,
        pixel_indices,
    })
}

/// Binary mask produced by the cleaning chain, before labelling.
pub fn clean_mask(img: &GrayImage, config: &DetectConfig) -> Result<BinaryImage> {
    let (bin, _) = imgproc::binarize(img, config.binarize_threshold);
    let cleaned = imgproc::remove_small_regions(&bin, config.measure.min_grain_area_px.max(1))?;
    imgproc::median_filter(&cleaned, config.median_window)
}

/// binarize, remove small regions, median filter, label, measure.
///
/// Components that fall below the minimum area after filtering are skipped.
/// Grain ids are positions in the returned list.
pub fn detect_grains(img: &GrayImage, config: &DetectConfig) -> Result<Vec<Grain>> {
    let mask = clean_mask(img, config)?;
    let mut grains = Vec::new();
    for comp in label_components(&mask) {
        match measure_grain(grains.len(), &comp, img.width(), img.calibration_mm_per_px(), &config.measure) {
            Ok(g) => grains.push(g),
            Err(Error::TooSmall { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(grains)
}
