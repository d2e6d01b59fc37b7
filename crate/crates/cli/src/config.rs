//! Pipeline configuration, stored as commented TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ricegrade_core::chalk::{ChalkParams, DEFAULT_CHALKY_GRAIN_MIN_RATIO};
use ricegrade_core::grading::GradeOptions;
use ricegrade_core::imgproc::BrightnessSchedule;
use ricegrade_core::model::{Branch, StandardsTable, VarietyCode, VarietyTable};
use ricegrade_core::segmentation::{AxisMethod, DetectConfig, MeasureOptions};
use serde::{Deserialize, Serialize};

/// Filename tokens that mark a completeness label in dataset layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletenessTokens {
    pub whole: Vec<String>,
    pub sizeable_broken: Vec<String>,
    pub tiny_broken: Vec<String>,
}

impl Default for CompletenessTokens {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            whole: v(&["whole", "intact"]),
            sizeable_broken: v(&["sizeable", "large", "big"]),
            tiny_broken: v(&["tiny", "small"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub calibration_mm_per_px: f64,
    pub declared_variety: VarietyCode,
    /// 1..=5; level 1 is the reference brightness.
    pub brightness_level: u8,
    pub brightness_gains: [f64; 5],
    /// Fixed binarization threshold; Otsu when absent.
    pub binarize_threshold: Option<u8>,
    pub min_grain_area_px: usize,
    pub median_window: usize,
    pub axis_method: AxisMethod,
    pub chalk_rho: f64,
    pub chalk_eps: f64,
    pub chalk_max_iter: usize,
    pub seed: u64,
    pub chalky_grain_min_ratio: f64,
    pub standards_path: Option<PathBuf>,
    /// Overrides of the built-in variety-to-branch mapping.
    pub branch_overrides: BTreeMap<VarietyCode, Branch>,
    pub output_dir: PathBuf,
    pub annotate: bool,
    /// Image worker count; `RICEGRADE_THREADS` caps it further.
    pub workers: Option<usize>,
    pub completeness_tokens: CompletenessTokens,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            calibration_mm_per_px: 0.05,
            declared_variety: VarietyCode::GD,
            brightness_level: 1,
            brightness_gains: BrightnessSchedule::default().gains,
            binarize_threshold: None,
            min_grain_area_px: 50,
            median_window: 3,
            axis_method: AxisMethod::MinAreaRect,
            chalk_rho: 1.15,
            chalk_eps: 1e-6,
            chalk_max_iter: 100,
            seed: 0,
            chalky_grain_min_ratio: DEFAULT_CHALKY_GRAIN_MIN_RATIO,
            standards_path: None,
            branch_overrides: BTreeMap::new(),
            output_dir: PathBuf::from("out"),
            annotate: false,
            workers: None,
            completeness_tokens: CompletenessTokens::default(),
        }
    }
}

const HEADER: &str = "\
# ricegrade pipeline configuration.
# Rates are fractions in [0, 1]. Omitted keys take their defaults.
";

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        format!("{HEADER}{}", toml::to_string(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.calibration_mm_per_px.is_finite() && self.calibration_mm_per_px > 0.0) {
            bail!("calibration_mm_per_px must be positive, got {}", self.calibration_mm_per_px);
        }
        if !(1..=5).contains(&self.brightness_level) {
            bail!("brightness_level must be in 1..=5, got {}", self.brightness_level);
        }
        BrightnessSchedule::new(self.brightness_gains)?;
        if self.min_grain_area_px == 0 {
            bail!("min_grain_area_px must be at least 1");
        }
        if self.median_window < 3 || self.median_window.is_multiple_of(2) {
            bail!("median_window must be odd and >= 3, got {}", self.median_window);
        }
        if !(self.chalk_rho.is_finite() && self.chalk_rho >= 0.0) {
            bail!("chalk_rho must be non-negative, got {}", self.chalk_rho);
        }
        if !(self.chalk_eps.is_finite() && self.chalk_eps > 0.0) {
            bail!("chalk_eps must be positive, got {}", self.chalk_eps);
        }
        if self.chalk_max_iter == 0 {
            bail!("chalk_max_iter must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.chalky_grain_min_ratio) {
            bail!("chalky_grain_min_ratio must be a fraction, got {}", self.chalky_grain_min_ratio);
        }
        if self.workers == Some(0) {
            bail!("workers must be at least 1");
        }
        Ok(())
    }

    pub fn brightness(&self) -> BrightnessSchedule {
        BrightnessSchedule { gains: self.brightness_gains }
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            binarize_threshold: self.binarize_threshold,
            median_window: self.median_window,
            measure: MeasureOptions { min_grain_area_px: self.min_grain_area_px, axis_method: self.axis_method },
        }
    }

    pub fn chalk(&self) -> ChalkParams {
        ChalkParams { rho: self.chalk_rho, eps: self.chalk_eps, max_iter: self.chalk_max_iter, seed: self.seed }
    }

    pub fn grade_options(&self) -> GradeOptions {
        GradeOptions { chalky_grain_min_ratio: self.chalky_grain_min_ratio }
    }

    pub fn varieties(&self) -> VarietyTable {
        self.branch_overrides.iter().fold(VarietyTable::default(), |t, (&code, &branch)| t.with_branch(code, branch))
    }

    pub fn standards(&self) -> Result<StandardsTable> {
        match &self.standards_path {
            None => Ok(StandardsTable::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                StandardsTable::from_json(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    /// Worker count after applying `RICEGRADE_THREADS`.
    pub fn worker_count(&self) -> usize {
        let configured = self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let cap = std::env::var("RICEGRADE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
        match cap {
            Some(c) if c > 0 => configured.min(c),
            _ => configured,
        }
        .max(1)
    }
}
