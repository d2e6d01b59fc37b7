//! Per-image analysis: preprocessing, grains, completeness, chalk, variety.

use std::path::Path;

use anyhow::{Context, Result};
use ricegrade_core::chalk::{self, ChalkMask};
use ricegrade_core::grading::{self, VarietyClassifier};
use ricegrade_core::imgproc::{self, GrayImage, Raster};
use ricegrade_core::model::{CompletenessClass, VarietyCode};
use ricegrade_core::segmentation::{self, Grain};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// Touching grains are reported as one component; flag anything larger than
/// this multiple of the declared variety's expected grain area.
pub const MERGED_AREA_FACTOR: f64 = 3.0;

/// Contrast stretch followed by the configured brightness level.
pub fn prepare(raw: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage> {
    let stretched = imgproc::contrast_stretch(raw);
    Ok(cfg.brightness().apply(&stretched, cfg.brightness_level)?)
}

pub struct AnalyzedImage {
    pub source: String,
    /// Preprocessed image that grains and chalk were measured on.
    pub image: GrayImage,
    pub grains: Vec<Grain>,
    pub masks: Vec<ChalkMask>,
}

pub fn analyze_gray(source: &str, raw: &GrayImage, cfg: &PipelineConfig) -> Result<AnalyzedImage> {
    let image = prepare(raw, cfg)?;
    let grains = segmentation::detect_grains(&image, &cfg.detect())?;
    let params = cfg.chalk();
    let masks =
        grains.iter().map(|g| chalk::segment_chalk(g, &image, &params)).collect::<ricegrade_core::Result<Vec<_>>>()?;
    Ok(AnalyzedImage { source: source.to_string(), image, grains, masks })
}

pub fn load_image(path: &Path, cfg: &PipelineConfig) -> Result<GrayImage> {
    GrayImage::open(path, cfg.calibration_mm_per_px).with_context(|| format!("reading {}", path.display()))
}

pub fn analyze_file(path: &Path, cfg: &PipelineConfig) -> Result<AnalyzedImage> {
    let raw = load_image(path, cfg)?;
    analyze_gray(&file_name(path), &raw, cfg)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrainReport {
    #[serde(flatten)]
    pub grain: Grain,
    /// `None` for fragments that pass the 1.0 mm sieve.
    pub completeness: Option<CompletenessClass>,
    pub chalk_ratio: f64,
    pub chalky_px: usize,
    pub chalk_threshold: f64,
    pub variety: VarietyCode,
    pub variety_distance: f64,
    pub possibly_merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub source: String,
    pub config: PipelineConfig,
    pub width: usize,
    pub height: usize,
    pub n_grains: usize,
    pub batch_avg_whole_length_mm: Option<f64>,
    pub grains: Vec<GrainReport>,
}

impl AnalyzedImage {
    pub fn report(&self, cfg: &PipelineConfig) -> Result<ImageReport> {
        let varieties = cfg.varieties();
        let variety = varieties.get(cfg.declared_variety);
        let classifier = VarietyClassifier::new(&varieties);
        let avg =
            if self.grains.is_empty() { None } else { Some(grading::batch_avg_whole_length(&self.grains, variety)?) };
        let merged_limit = MERGED_AREA_FACTOR * variety.expected_area_mm2();
        let grains = self
            .grains
            .iter()
            .zip(&self.masks)
            .map(|(g, m)| {
                let (code, dist) = classifier.classify_grain(g);
                GrainReport {
                    grain: g.clone(),
                    completeness: avg.and_then(|a| grading::classify_completeness(g, a)),
                    chalk_ratio: m.ratio,
                    chalky_px: m.chalky_px,
                    chalk_threshold: m.threshold,
                    variety: code,
                    variety_distance: dist,
                    possibly_merged: g.area_mm2 > merged_limit,
                }
            })
            .collect();
        Ok(ImageReport {
            source: self.source.clone(),
            config: cfg.clone(),
            width: self.image.width(),
            height: self.image.height(),
            n_grains: self.grains.len(),
            batch_avg_whole_length_mm: avg,
            grains,
        })
    }
}
