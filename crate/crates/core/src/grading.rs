//! Completeness classes, broken-rice rates, variety identification and grade
//! assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chalk::{self, ChalkMask, Chalkiness};
use crate::model::{Branch, CompletenessClass, RiceVariety, StandardsTable, VarietyCode, VarietyTable};
use crate::segmentation::Grain;
use crate::{Error, Result};

/// A grain shorter than this fraction of the batch's whole-grain length is broken.
pub const WHOLE_LENGTH_FRACTION: f64 = 0.75;
/// Round-hole sieve separating sizeable from tiny broken rice, mm.
pub const LARGE_SIEVE_MM: f64 = 2.0;
/// Round-hole sieve below which fragments leave the sample, mm.
pub const SMALL_SIEVE_MM: f64 = 1.0;

/// Completeness from axis lengths.
///
/// A grain passes a round-hole sieve of diameter `d` when its short axis is
/// below `d`. Returns `None` for broken fragments that pass the 1.0 mm sieve;
/// those are not part of the sample.
pub fn classify_axes(
    long_axis_mm: f64,
    short_axis_mm: f64,
    batch_avg_whole_length_mm: f64,
) -> Option<CompletenessClass> {
    debug_assert!(batch_avg_whole_length_mm > 0.0);
    if long_axis_mm >= WHOLE_LENGTH_FRACTION * batch_avg_whole_length_mm {
        Some(CompletenessClass::Whole)
    } else if short_axis_mm >= LARGE_SIEVE_MM {
        Some(CompletenessClass::SizeableBroken)
    } else if short_axis_mm >= SMALL_SIEVE_MM {
        Some(CompletenessClass::TinyBroken)
    } else {
        None
    }
}

pub fn classify_completeness(grain: &Grain, batch_avg_whole_length_mm: f64) -> Option<CompletenessClass> {
    classify_axes(grain.long_axis_mm, grain.short_axis_mm, batch_avg_whole_length_mm)
}

/// Mean long axis of the batch's whole grains.
///
/// Wholeness depends on this average, so it is resolved in two passes: grains
/// are first classified against the variety's reference length, then the
/// average is taken over the grains that came out whole. With no whole grains
/// the reference length is returned.
pub fn compute_batch_avg_whole_length(long_axes_mm: &[f64], variety: &RiceVariety) -> Result<f64> {
    if long_axes_mm.is_empty() {
        return Err(Error::invalid("batch average needs at least one grain"));
    }
    let cutoff = WHOLE_LENGTH_FRACTION * variety.avg_length_mm;
    let whole: Vec<f64> = long_axes_mm.iter().copied().filter(|&l| l >= cutoff).collect();
    if whole.is_empty() {
        Ok(variety.avg_length_mm)
    } else {
        Ok(whole.iter().sum::<f64>() / whole.len() as f64)
    }
}

pub fn batch_avg_whole_length(grains: &[Grain], variety: &RiceVariety) -> Result<f64> {
    let axes: Vec<f64> = grains.iter().map(|g| g.long_axis_mm).collect();
    compute_batch_avg_whole_length(&axes, variety)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassBasis {
    MeasuredMass,
    AreaProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrokenRates {
    /// Tiny broken mass over sample mass.
    pub x1: f64,
    /// Sizeable plus tiny broken mass over sample mass.
    pub x2: f64,
}

/// Rates from (class, mass) pairs.
pub fn broken_rates_from_masses(items: impl IntoIterator<Item = (CompletenessClass, f64)>) -> Result<BrokenRates> {
    let (mut m, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (class, mass) in items {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::invalid(format!("mass must be finite and non-negative, got {mass}")));
        }
        m += mass;
        match class {
            CompletenessClass::Whole => {}
            CompletenessClass::SizeableBroken => m2 += mass,
            CompletenessClass::TinyBroken => {
                m1 += mass;
                m2 += mass;
            }
        }
    }
    if m.is_nan() || m <= 0.0 {
        return Err(Error::invalid("total sample mass is zero"));
    }
    Ok(BrokenRates { x1: m1 / m, x2: m2 / m })
}

/// Broken rates of classified grains. Without measured masses each grain's
/// projected area stands in for its mass.
pub fn broken_rates(
    grains: &[(&Grain, CompletenessClass)],
    masses: Option<&[f64]>,
) -> Result<(BrokenRates, MassBasis)> {
    match masses {
        Some(m) => {
            if m.len() != grains.len() {
                return Err(Error::invalid(format!("{} masses for {} grains", m.len(), grains.len())));
            }
            let rates = broken_rates_from_masses(grains.iter().zip(m).map(|((_, c), &mass)| (*c, mass)))?;
            Ok((rates, MassBasis::MeasuredMass))
        }
        None => {
            let rates = broken_rates_from_masses(grains.iter().map(|(g, c)| (*c, g.area_mm2)))?;
            Ok((rates, MassBasis::AreaProxy))
        }
    }
}

/// Nearest-centroid variety classifier over (length, width), each dimension
/// divided by its population standard deviation across the variety table.
#[derive(Debug, Clone)]
pub struct VarietyClassifier {
    centroids: Vec<(VarietyCode, f64, f64)>,
    scale: (f64, f64),
}

impl Default for VarietyClassifier {
    fn default() -> Self {
        Self::new(&VarietyTable::default())
    }
}

fn population_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl VarietyClassifier {
    pub fn new(table: &VarietyTable) -> Self {
        let centroids: Vec<_> = table.entries().iter().map(|v| (v.code, v.avg_length_mm, v.avg_width_mm)).collect();
        let scale = (population_std(centroids.iter().map(|c| c.1)), population_std(centroids.iter().map(|c| c.2)));
        Self { centroids, scale }
    }

    pub fn scale(&self) -> (f64, f64) {
        self.scale
    }

    /// Nearest variety and its standardized distance; ties go to enum order.
    pub fn classify(&self, length_mm: f64, width_mm: f64) -> (VarietyCode, f64) {
        let mut best: Option<(VarietyCode, f64)> = None;
        for &(code, l, w) in &self.centroids {
            let dl = (length_mm - l) / self.scale.0;
            let dw = (width_mm - w) / self.scale.1;
            let d = dl.hypot(dw);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((code, d));
            }
        }
        best.expect("variety table is non-empty")
    }

    pub fn classify_grain(&self, grain: &Grain) -> (VarietyCode, f64) {
        self.classify(grain.long_axis_mm, grain.short_axis_mm)
    }
}

pub fn classify_variety(grain: &Grain) -> (VarietyCode, f64) {
    VarietyClassifier::default().classify_grain(grain)
}

/// Fraction of grains classified as something other than `declared`.
pub fn admixture_rate(grains: &[Grain], declared: VarietyCode, classifier: &VarietyClassifier) -> Result<f64> {
    if grains.is_empty() {
        return Err(Error::invalid("admixture rate needs at least one grain"));
    }
    let foreign = grains.iter().filter(|g| classifier.classify_grain(g).0 != declared).count();
    Ok(foreign as f64 / grains.len() as f64)
}

/// Grade level, or off-grade when no level's limits are met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grade {
    Level(u8),
    OffGrade,
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grade::Level(l) => write!(f, "{l}"),
            Grade::OffGrade => f.write_str("OffGrade"),
        }
    }
}

impl Serialize for Grade {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Grade::Level(l) => s.serialize_u8(*l),
            Grade::OffGrade => s.serialize_str("OffGrade"),
        }
    }
}

impl<'de> Deserialize<'de> for Grade {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Level(u8),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Level(l) => Ok(Grade::Level(l)),
            Raw::Name(s) if s == "OffGrade" => Ok(Grade::OffGrade),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("unknown grade {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRates {
    /// Small (tiny) broken rate.
    pub x1: f64,
    /// Total broken rate.
    pub x2: f64,
    /// Chalkiness; ignored for glutinous branches.
    pub d: f64,
    pub admixture: f64,
}

/// Lowest level whose limits hold for every rate, else off-grade.
pub fn assign_grade(standards: &StandardsTable, branch: Branch, rates: &SampleRates) -> Grade {
    standards
        .branch_rows(branch)
        .find(|row| {
            rates.x2 <= row.max_broken_rate
                && rates.x1 <= row.max_small_broken_rate
                && row.max_chalk_rate.is_none_or(|max| rates.d <= max)
                && rates.admixture <= row.max_admixture_rate
        })
        .map_or(Grade::OffGrade, |row| Grade::Level(row.level))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeOptions {
    pub chalky_grain_min_ratio: f64,
}

impl Default for GradeOptions {
    fn default() -> Self {
        Self { chalky_grain_min_ratio: chalk::DEFAULT_CHALKY_GRAIN_MIN_RATIO }
    }
}

/// Batch statistics and grade of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub declared_variety: VarietyCode,
    pub branch: Branch,
    pub n_grains: usize,
    pub class_counts: BTreeMap<CompletenessClass, usize>,
    /// Fragments that pass the 1.0 mm sieve; not counted in `n_grains`.
    pub excluded_fragments: usize,
    pub batch_avg_whole_length_mm: f64,
    pub small_broken_rate: f64,
    pub broken_rate: f64,
    pub chalkiness: f64,
    pub chalk: Option<Chalkiness>,
    pub admixture_rate: f64,
    pub grade: Grade,
    pub mass_basis: MassBasis,
}

/// Everything needed to grade one sample.
#[derive(Debug, Clone, Copy)]
pub struct GradeContext<'a> {
    pub declared: VarietyCode,
    pub varieties: &'a VarietyTable,
    pub standards: &'a StandardsTable,
    pub options: GradeOptions,
}

/// Grades a sample of measured grains.
///
/// `masks[i]` is the chalk mask of `grains[i]`; `masses`, when given, holds
/// per-grain masses in the same order. Chalkiness and admixture are taken over
/// whole grains (over all retained grains if none are whole).
pub fn grade_sample(
    grains: &[Grain],
    masks: &[ChalkMask],
    masses: Option<&[f64]>,
    ctx: &GradeContext<'_>,
) -> Result<SampleReport> {
    if grains.is_empty() {
        return Err(Error::invalid("cannot grade a sample without grains"));
    }
    if masks.len() != grains.len() {
        return Err(Error::invalid(format!("{} chalk masks for {} grains", masks.len(), grains.len())));
    }
    if let Some(m) = masses {
        if m.len() != grains.len() {
            return Err(Error::invalid(format!("{} masses for {} grains", m.len(), grains.len())));
        }
    }
    let variety = ctx.varieties.get(ctx.declared);
    let avg = batch_avg_whole_length(grains, variety)?;

    let mut kept: Vec<(usize, CompletenessClass)> = Vec::with_capacity(grains.len());
    for (i, g) in grains.iter().enumerate() {
        if let Some(c) = classify_completeness(g, avg) {
            kept.push((i, c));
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every grain passes the 1.0 mm sieve; nothing to grade"));
    }

    let mut class_counts: BTreeMap<CompletenessClass, usize> = CompletenessClass::ALL.iter().map(|&c| (c, 0)).collect();
    for &(_, c) in &kept {
        *class_counts.get_mut(&c).expect("all classes present") += 1;
    }

    let pairs: Vec<(&Grain, CompletenessClass)> = kept.iter().map(|&(i, c)| (&grains[i], c)).collect();
    let kept_masses: Option<Vec<f64>> = masses.map(|m| kept.iter().map(|&(i, _)| m[i]).collect());
    let (rates, mass_basis) = broken_rates(&pairs, kept_masses.as_deref())?;

    let whole: Vec<usize> = kept.iter().filter(|(_, c)| *c == CompletenessClass::Whole).map(|&(i, _)| i).collect();
    let chalk = if whole.is_empty() {
        None
    } else {
        let ratios: Vec<f64> = whole.iter().map(|&i| masks[i].ratio).collect();
        Some(chalk::chalkiness(&ratios, ctx.options.chalky_grain_min_ratio)?)
    };
    let d = chalk.map_or(0.0, |c| c.d);

    let basis: Vec<Grain> = if whole.is_empty() {
        kept.iter().map(|&(i, _)| grains[i].clone()).collect()
    } else {
        whole.iter().map(|&i| grains[i].clone()).collect()
    };
    let admixture = admixture_rate(&basis, ctx.declared, &VarietyClassifier::new(ctx.varieties))?;

    let rates_all = SampleRates { x1: rates.x1, x2: rates.x2, d, admixture };
    let grade = assign_grade(ctx.standards, variety.branch, &rates_all);

    Ok(SampleReport {
        declared_variety: ctx.declared,
        branch: variety.branch,
        n_grains: kept.len(),
        class_counts,
        excluded_fragments: grains.len() - kept.len(),
        batch_avg_whole_length_mm: avg,
        small_broken_rate: rates.x1,
        broken_rate: rates.x2,
        chalkiness: d,
        chalk,
        admixture_rate: admixture,
        grade,
        mass_basis,
    })
}
