//! Chalky-region segmentation.
//!
//! Grain intensities are clustered with Lloyd's K-means. With one cluster the
//! center is the grain's mean intensity `mu`, and a pixel is chalky when it
//! reaches the category threshold `T = mu * rho`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imgproc::{BrightnessSchedule, GrayImage, Raster};
use crate::segmentation::Grain;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { k: 1, eps: 1e-6, max_iter: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub centers: Vec<f64>,
    /// Cluster index per input value, from the last assignment step.
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn nearest(centers: &[f64], v: f64) -> (usize, f64) {
    let mut best = (0, (v - centers[0]).powi(2));
    for (j, &c) in centers.iter().enumerate().skip(1) {
        let d = (v - c).powi(2);
        // strict: ties go to the lower index
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's K-means on scalar values.
///
/// Centers start at `k` distinct input values drawn with a ChaCha8 generator
/// seeded from `params.seed`. Iteration stops once no center moves by `eps`
/// or more, or after `max_iter` rounds. An empty cluster keeps its center.
pub fn kmeans(values: &[f64], params: &KMeansParams) -> Result<ClusterResult> {
    if values.is_empty() {
        return Err(Error::EmptyInput("kmeans needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kmeans values must be finite"));
    }
    if params.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if params.eps.is_nan() || params.eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be positive, got {}", params.eps)));
    }
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if params.k > distinct.len() {
        return Err(Error::invalid(format!("k = {} exceeds the {} distinct values", params.k, distinct.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers: Vec<f64> =
        index::sample(&mut rng, distinct.len(), params.k).into_iter().map(|i| distinct[i]).collect();

    let mut assignments = vec![0; values.len()];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let mut sse = 0.0;
        for (a, &v) in assignments.iter_mut().zip(values) {
            let (j, d) = nearest(&centers, v);
            *a = j;
            sse += d;
        }
        sse_history.push(sse);

        let mut sums = vec![0.0; params.k];
        let mut counts = vec![0usize; params.k];
        for (&a, &v) in assignments.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..params.k {
            if counts[j] > 0 {
                let c = sums[j] / counts[j] as f64;
                shift = shift.max((c - centers[j]).abs());
                centers[j] = c;
            }
        }
        iterations += 1;
        if shift < params.eps {
            converged = true;
            break;
        }
    }

    Ok(ClusterResult { centers, assignments, sse_history, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChalkParams {
    /// Threshold factor on the grain's mean intensity.
    pub rho: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ChalkParams {
    fn default() -> Self {
        Self { rho: 1.15, eps: 1e-6, max_iter: 100, seed: 0 }
    }
}

/// Chalky pixels of one grain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChalkMask {
    pub grain_id: usize,
    /// One flag per entry of the grain's `pixel_indices`.
    #[serde(skip)]
    pub chalky: Vec<bool>,
    pub chalky_px: usize,
    pub ratio: f64,
    /// Cluster center (mean intensity of the grain).
    pub center: f64,
    pub threshold: f64,
}

impl ChalkMask {
    /// Linear image indices of chalky pixels.
    pub fn chalky_indices<'a>(&'a self, grain: &'a Grain) -> impl Iterator<Item = usize> + 'a {
        grain.pixel_indices.iter().zip(&self.chalky).filter(|(_, &c)| c).map(|(&i, _)| i)
    }
}

fn grain_values(grain: &Grain, img: &GrayImage) -> Result<Vec<u8>> {
    let px = img.pixels();
    if grain.pixel_indices.is_empty() {
        return Err(Error::EmptyInput("grain has no pixels"));
    }
    grain
        .pixel_indices
        .iter()
        .map(|&i| {
            px.get(i)
                .copied()
                .ok_or_else(|| Error::invalid(format!("grain {} pixel {i} lies outside the image", grain.component_id)))
        })
        .collect()
}

fn mask_from_threshold(grain_id: usize, values: &[u8], center: f64, threshold: f64) -> ChalkMask {
    let chalky: Vec<bool> = values.iter().map(|&v| v as f64 >= threshold).collect();
    let chalky_px = chalky.iter().filter(|&&c| c).count();
    ChalkMask { grain_id, ratio: chalky_px as f64 / values.len() as f64, chalky, chalky_px, center, threshold }
}

/// Single-cluster K-means over the grain's intensities; a pixel is chalky when
/// its intensity is at least `center * rho`.
pub fn segment_chalk(grain: &Grain, img: &GrayImage, params: &ChalkParams) -> Result<ChalkMask> {
    let values = grain_values(grain, img)?;
    let as_f64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let clusters =
        kmeans(&as_f64, &KMeansParams { k: 1, eps: params.eps, max_iter: params.max_iter, seed: params.seed })?;
    let center = clusters.centers[0];
    Ok(mask_from_threshold(grain.component_id, &values, center, center * params.rho))
}

/// Sample chalkiness: `D = W_D * n1 / n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chalkiness {
    /// Mean chalky-area ratio over chalky grains.
    pub w_d: f64,
    /// Chalky grains.
    pub n1: usize,
    /// All grains.
    pub n0: usize,
    pub d: f64,
}

pub const DEFAULT_CHALKY_GRAIN_MIN_RATIO: f64 = 0.01;

/// `D = W_D * n1 / n0` from its three inputs.
pub fn chalkiness_from_counts(w_d: f64, n1: usize, n0: usize) -> Result<Chalkiness> {
    if n0 == 0 {
        return Err(Error::invalid("chalkiness needs at least one grain"));
    }
    if n1 > n0 {
        return Err(Error::invalid(format!("n1 = {n1} exceeds n0 = {n0}")));
    }
    if !(0.0..=1.0).contains(&w_d) {
        return Err(Error::invalid(format!("W_D must be a fraction, got {w_d}")));
    }
    Ok(Chalkiness { w_d, n1, n0, d: w_d * n1 as f64 / n0 as f64 })
}

/// Grains whose chalk ratio is at least `chalky_grain_min_ratio` count as
/// chalky; `W_D` is the mean ratio over those grains (0 when there are none).
pub fn chalkiness(ratios: &[f64], chalky_grain_min_ratio: f64) -> Result<Chalkiness> {
    if ratios.is_empty() {
        return Err(Error::invalid("chalkiness needs at least one grain"));
    }
    let chalky: Vec<f64> = ratios.iter().copied().filter(|&r| r >= chalky_grain_min_ratio).collect();
    let w_d = if chalky.is_empty() { 0.0 } else { chalky.iter().sum::<f64>() / chalky.len() as f64 };
    chalkiness_from_counts(w_d.clamp(0.0, 1.0), chalky.len(), ratios.len())
}

pub fn chalkiness_of_masks(masks: &[ChalkMask], chalky_grain_min_ratio: f64) -> Result<Chalkiness> {
    let ratios: Vec<f64> = masks.iter().map(|m| m.ratio).collect();
    chalkiness(&ratios, chalky_grain_min_ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: u8,
    pub chalk_ratio: f64,
}

/// Chalk ratio of one grain at every brightness level, with the threshold
/// frozen at the value computed on the level-1 image.
pub fn luminance_sweep(
    img: &GrayImage,
    grain: &Grain,
    params: &ChalkParams,
    schedule: &BrightnessSchedule,
) -> Result<Vec<SweepRow>> {
    let base = grain_values(grain, img)?;
    let level1: Vec<u8> = base.iter().map(|&p| schedule.apply_pixel(p, 1)).collect::<Result<_>>()?;
    let as_f64: Vec<f64> = level1.iter().map(|&v| v as f64).collect();
    let clusters =
        kmeans(&as_f64, &KMeansParams { k: 1, eps: params.eps, max_iter: params.max_iter, seed: params.seed })?;
    let center = clusters.centers[0];
    let threshold = center * params.rho;

    BrightnessSchedule::LEVELS
        .map(|level| {
            let values: Vec<u8> = base.iter().map(|&p| schedule.apply_pixel(p, level)).collect::<Result<_>>()?;
            let mask = mask_from_threshold(grain.component_id, &values, center, threshold);
            Ok(SweepRow { level, chalk_ratio: mask.ratio })
        })
        .collect()
}

/// True when ratios never decrease with level.
pub fn is_monotone(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| w[0].chalk_ratio <= w[1].chalk_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::BBox;
    use proptest::prelude::*;

    fn grain_over(values: &[u8]) -> (Grain, GrayImage) {
        let img = GrayImage::new(values.len(), 1, values.to_vec(), 0.05).unwrap();
        let grain = Grain {
            component_id: 3,
            bbox: BBox { x: 0, y: 0, w: values.len(), h: 1 },
            pixel_count: values.len(),
            long_axis_mm: 1.0,
            short_axis_mm: 0.05,
            area_mm2: values.len() as f64 * 0.0025,
            pixel_indices: (0..values.len()).collect(),
        };
        (grain, img)
    }

    #[test]
    fn kmeans_two_clusters() {
        let values = [0.0, 1.0, 2.0, 100.0, 101.0, 102.0];
        for seed in 0..20 {
            let r = kmeans(&values, &KMeansParams { k: 2, seed, ..Default::default() }).unwrap();
            let mut c = r.centers.clone();
            c.sort_by(f64::total_cmp);
            assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] - 101.0).abs() < 1e-9, "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn kmeans_errors() {
        assert!(kmeans(&[], &KMeansParams::default()).is_err());
        assert!(kmeans(&[1.0, 1.0], &KMeansParams { k: 2, ..Default::default() }).is_err());
        assert!(kmeans(&[1.0], &KMeansParams { k: 0, ..Default::default() }).is_err());
        assert!(kmeans(&[1.0], &KMeansParams { eps: 0.0, ..Default::default() }).is_err());
        assert!(kmeans(&[f64::NAN], &KMeansParams::default()).is_err());
    }

    #[test]
    fn kmeans_reproducible() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 37) % 251) as f64).collect();
        let p = KMeansParams { k: 3, seed: 42, ..Default::default() };
        assert_eq!(kmeans(&values, &p).unwrap(), kmeans(&values, &p).unwrap());
    }

    #[test]
    fn tie_goes_to_lower_index() {
        assert_eq!(nearest(&[0.0, 2.0], 1.0).0, 0);
        assert_eq!(nearest(&[2.0, 0.0], 1.0).0, 0);
    }

    #[test]
    fn segment_fixtures() {
        let (g, img) = grain_over(&[180; 50]);
        let m = segment_chalk(&g, &img, &ChalkParams::default()).unwrap();
        assert_eq!((m.center, m.ratio), (180.0, 0.0));
        assert!((m.threshold - 207.0).abs() < 1e-9);

        let mut values = vec![100u8; 80];
        values.extend([250u8; 20]);
        let (g, img) = grain_over(&values);
        let m = segment_chalk(&g, &img, &ChalkParams::default()).unwrap();
        assert!((m.center - 130.0).abs() < 1e-12);
        assert!((m.threshold - 149.5).abs() < 1e-9);
        assert_eq!((m.chalky_px, m.ratio), (20, 0.20));
        assert_eq!(m.chalky_indices(&g).collect::<Vec<_>>(), (80..100).collect::<Vec<_>>());

        let m = segment_chalk(&g, &img, &ChalkParams { rho: 0.0, ..Default::default() }).unwrap();
        assert_eq!(m.ratio, 1.0);
    }

    #[test]
    fn grain_outside_image() {
        let (mut g, img) = grain_over(&[1, 2, 3]);
        g.pixel_indices.push(99);
        assert!(segment_chalk(&g, &img, &ChalkParams::default()).is_err());
    }

    #[test]
    fn chalkiness_fixtures() {
        let c = chalkiness_from_counts(0.20, 30, 100).unwrap();
        assert!((c.d - 0.06).abs() < 1e-12);

        let c = chalkiness(&[0.0; 5], DEFAULT_CHALKY_GRAIN_MIN_RATIO).unwrap();
        assert_eq!((c.n1, c.d), (0, 0.0));

        let mut ratios = vec![0.0; 6];
        ratios.extend([0.1, 0.2, 0.3, 0.4]);
        let c = chalkiness(&ratios, DEFAULT_CHALKY_GRAIN_MIN_RATIO).unwrap();
        assert!((c.w_d - 0.25).abs() < 1e-12);
        assert!((c.d - 0.10).abs() < 1e-12);
        assert_eq!((c.n1, c.n0), (4, 10));

        assert!(chalkiness(&[], 0.01).is_err());
    }

    #[test]
    fn sweep_fixtures() {
        let mut values = vec![90u8; 70];
        values.extend((0..30).map(|i| 120 + i as u8 * 3));
        let (g, img) = grain_over(&values);
        let schedule = BrightnessSchedule::default();
        let rows = luminance_sweep(&img, &g, &ChalkParams::default(), &schedule).unwrap();
        assert_eq!(rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        let direct = segment_chalk(&g, &img, &ChalkParams::default()).unwrap();
        assert_eq!(rows[0].chalk_ratio, direct.ratio);
        assert!(is_monotone(&rows));

        let (g, img) = grain_over(&[255; 10]);
        let rows = luminance_sweep(&img, &g, &ChalkParams { rho: 1.0, ..Default::default() }, &schedule).unwrap();
        assert!(rows.iter().all(|r| r.chalk_ratio == 1.0));
    }

    proptest! {
        #[test]
        fn kmeans_invariants(values in proptest::collection::vec(0u8..=255, 1..200), k in 1usize..4, seed in any::<u64>()) {
            let vals: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let mut distinct = values.clone();
            distinct.sort();
            distinct.dedup();
            prop_assume!(k <= distinct.len());
            let r = kmeans(&vals, &KMeansParams { k, seed, max_iter: 200, ..Default::default() }).unwrap();
            for w in r.sse_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            if k == 1 {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((r.centers[0] - mean).abs() < 1e-6);
            }
            if r.converged {
                for (j, size) in r.cluster_sizes().into_iter().enumerate() {
                    if size > 0 {
                        let mean = vals.iter().zip(&r.assignments).filter(|(_, &a)| a == j).map(|(v, _)| v).sum::<f64>() / size as f64;
                        prop_assert!((r.centers[j] - mean).abs() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn chalk_ratio_order_free(values in proptest::collection::vec(1u8..=255, 2..60), rot in 0usize..60) {
            let (g, img) = grain_over(&values);
            let mut shuffled = values.clone();
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
            let (g2, img2) = grain_over(&shuffled);
            let a = segment_chalk(&g, &img, &ChalkParams::default()).unwrap();
            let b = segment_chalk(&g2, &img2, &ChalkParams::default()).unwrap();
            prop_assert_eq!(a.chalky_px, b.chalky_px);
        }

        #[test]
        fn chalkiness_bounds(ratios in proptest::collection::vec(0.0f64..=1.0, 1..50)) {
            let c = chalkiness(&ratios, DEFAULT_CHALKY_GRAIN_MIN_RATIO).unwrap();
            prop_assert!(c.d <= c.w_d + 1e-15);
            prop_assert!(c.d <= c.n1 as f64 / c.n0 as f64 + 1e-15);
        }
    }
}
