//! Variety metadata and grading-standard tables.
//!
//! Rates are fractions in `[0, 1]` everywhere in this crate; they are only
//! turned into percentages when a report is rendered.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The six cultivars in the reference dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarietyCode {
    GD,
    NM,
    WC,
    PJX,
    WN,
    YB,
}

impl VarietyCode {
    /// Enum order; also the tie-break order of the centroid classifier.
    pub const ALL: [VarietyCode; 6] =
        [VarietyCode::GD, VarietyCode::NM, VarietyCode::WC, VarietyCode::PJX, VarietyCode::WN, VarietyCode::YB];

    pub fn as_str(self) -> &'static str {
        match self {
            VarietyCode::GD => "GD",
            VarietyCode::NM => "NM",
            VarietyCode::WC => "WC",
            VarietyCode::PJX => "PJX",
            VarietyCode::WN => "WN",
            VarietyCode::YB => "YB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for VarietyCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarietyCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VarietyCode::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown variety code {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Indica,
    Japonica,
    GlutinousJaponica,
    GlutinousIndica,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Indica, Branch::Japonica, Branch::GlutinousJaponica, Branch::GlutinousIndica];

    pub fn is_glutinous(self) -> bool {
        matches!(self, Branch::GlutinousJaponica | Branch::GlutinousIndica)
    }

    pub fn max_level(self) -> u8 {
        if self.is_glutinous() {
            2
        } else {
            3
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Branch::ALL
            .into_iter()
            .find(|b| format!("{b:?}").eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown branch {s:?}")))
    }
}

/// One row of the variety table: mean whole-grain length and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiceVariety {
    pub code: VarietyCode,
    pub branch: Branch,
    pub avg_length_mm: f64,
    pub avg_width_mm: f64,
}

impl RiceVariety {
    /// Projected area of an ellipse with the variety's mean length and width.
    pub fn expected_area_mm2(&self) -> f64 {
        std::f64::consts::FRAC_PI_4 * self.avg_length_mm * self.avg_width_mm
    }
}

const DEFAULT_VARIETIES: [RiceVariety; 6] = [
    RiceVariety { code: VarietyCode::GD, branch: Branch::Indica, avg_length_mm: 6.74, avg_width_mm: 1.74 },
    // NM is only labelled "glutinous"; the japonica branch is a configurable default.
    RiceVariety { code: VarietyCode::NM, branch: Branch::GlutinousJaponica, avg_length_mm: 4.45, avg_width_mm: 2.86 },
    RiceVariety { code: VarietyCode::WC, branch: Branch::Indica, avg_length_mm: 6.63, avg_width_mm: 2.44 },
    RiceVariety { code: VarietyCode::PJX, branch: Branch::Japonica, avg_length_mm: 4.82, avg_width_mm: 2.83 },
    RiceVariety { code: VarietyCode::WN, branch: Branch::Indica, avg_length_mm: 6.81, avg_width_mm: 2.20 },
    RiceVariety { code: VarietyCode::YB, branch: Branch::Japonica, avg_length_mm: 4.59, avg_width_mm: 2.62 },
];

/// Built-in variety entry with the default branch mapping.
pub fn variety(code: VarietyCode) -> RiceVariety {
    DEFAULT_VARIETIES[code.index()]
}

/// Mean (length, width) in mm for a variety.
pub fn variety_centroid(code: VarietyCode) -> (f64, f64) {
    let v = variety(code);
    (v.avg_length_mm, v.avg_width_mm)
}

/// Variety table with an overridable variety-to-branch mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct VarietyTable {
    entries: [RiceVariety; 6],
}

impl Default for VarietyTable {
    fn default() -> Self {
        Self { entries: DEFAULT_VARIETIES }
    }
}

impl VarietyTable {
    pub fn get(&self, code: VarietyCode) -> &RiceVariety {
        &self.entries[code.index()]
    }

    pub fn entries(&self) -> &[RiceVariety] {
        &self.entries
    }

    pub fn with_branch(mut self, code: VarietyCode, branch: Branch) -> Self {
        self.entries[code.index()].branch = branch;
        self
    }
}

/// Three completeness levels of a grain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompletenessClass {
    Whole,
    SizeableBroken,
    TinyBroken,
}

impl CompletenessClass {
    pub const ALL: [CompletenessClass; 3] =
        [CompletenessClass::Whole, CompletenessClass::SizeableBroken, CompletenessClass::TinyBroken];

    pub fn is_broken(self) -> bool {
        self != CompletenessClass::Whole
    }
}

/// Upper limits for one grade level of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradingStandard {
    pub branch: Branch,
    pub level: u8,
    pub max_broken_rate: f64,
    pub max_small_broken_rate: f64,
    /// Absent for glutinous rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_chalk_rate: Option<f64>,
    pub max_admixture_rate: f64,
}

const fn row(branch: Branch, level: u8, broken: f64, small: f64, chalk: Option<f64>) -> GradingStandard {
    GradingStandard {
        branch,
        level,
        max_broken_rate: broken,
        max_small_broken_rate: small,
        max_chalk_rate: chalk,
        max_admixture_rate: 0.05,
    }
}

const DEFAULT_STANDARDS: [GradingStandard; 10] = [
    row(Branch::Indica, 1, 0.15, 0.01, Some(0.02)),
    row(Branch::Indica, 2, 0.20, 0.015, Some(0.05)),
    row(Branch::Indica, 3, 0.30, 0.02, Some(0.08)),
    row(Branch::Japonica, 1, 0.10, 0.01, Some(0.02)),
    row(Branch::Japonica, 2, 0.15, 0.015, Some(0.04)),
    row(Branch::Japonica, 3, 0.20, 0.02, Some(0.06)),
    row(Branch::GlutinousJaponica, 1, 0.10, 0.015, None),
    row(Branch::GlutinousJaponica, 2, 0.15, 0.02, None),
    row(Branch::GlutinousIndica, 1, 0.15, 0.02, None),
    row(Branch::GlutinousIndica, 2, 0.25, 0.025, None),
];

/// Grading thresholds for every branch and level.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardsTable {
    rows: Vec<GradingStandard>,
}

impl Default for StandardsTable {
    fn default() -> Self {
        Self { rows: DEFAULT_STANDARDS.to_vec() }
    }
}

impl StandardsTable {
    /// Validates and sorts `rows` by (branch, level).
    ///
    /// Every branch must have exactly levels `1..=max_level`, rates must be
    /// fractions, chalk limits must be present exactly on non-glutinous rows,
    /// and limits must not decrease with level.
    pub fn new(mut rows: Vec<GradingStandard>) -> Result<Self> {
        rows.sort_by_key(|r| (r.branch, r.level));
        for branch in Branch::ALL {
            let levels: Vec<u8> = rows.iter().filter(|r| r.branch == branch).map(|r| r.level).collect();
            let expected: Vec<u8> = (1..=branch.max_level()).collect();
            if levels != expected {
                return Err(Error::invalid(format!("{branch:?} needs levels {expected:?}, found {levels:?}")));
            }
        }
        for r in &rows {
            let mut rates = vec![r.max_broken_rate, r.max_small_broken_rate, r.max_admixture_rate];
            rates.extend(r.max_chalk_rate);
            if rates.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!(
                    "{:?} level {}: rates must be fractions in [0, 1]",
                    r.branch, r.level
                )));
            }
            if r.max_chalk_rate.is_some() == r.branch.is_glutinous() {
                return Err(Error::invalid(format!(
                    "{:?} level {}: chalk limit must be present iff the branch is non-glutinous",
                    r.branch, r.level
                )));
            }
        }
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.branch != b.branch {
                continue;
            }
            let chalk_ok = match (a.max_chalk_rate, b.max_chalk_rate) {
                (Some(x), Some(y)) => x <= y,
                _ => true,
            };
            if a.max_broken_rate > b.max_broken_rate
                || a.max_small_broken_rate > b.max_small_broken_rate
                || a.max_admixture_rate > b.max_admixture_rate
                || !chalk_ok
            {
                return Err(Error::invalid(format!(
                    "{:?}: limits decrease from level {} to {}",
                    a.branch, a.level, b.level
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Parses a JSON array of rows.
    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<GradingStandard> = serde_json::from_str(text)?;
        Self::new(rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("standards rows serialize")
    }

    pub fn rows(&self) -> &[GradingStandard] {
        &self.rows
    }

    /// Rows of one branch in ascending level order.
    pub fn branch_rows(&self, branch: Branch) -> impl Iterator<Item = &GradingStandard> {
        self.rows.iter().filter(move |r| r.branch == branch)
    }

    pub fn row(&self, branch: Branch, level: u8) -> Result<&GradingStandard> {
        self.rows.iter().find(|r| r.branch == branch && r.level == level).ok_or_else(|| Error::OutOfRange {
            what: "grade level",
            value: level as i64,
            range: format!("1..={} for {branch:?}", branch.max_level()),
        })
    }
}

/// Looks up a row of the built-in standards table.
pub fn standard_row(branch: Branch, level: u8) -> Result<GradingStandard> {
    StandardsTable::default().row(branch, level).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroids_match_table() {
        assert_eq!(variety_centroid(VarietyCode::GD), (6.74, 1.74));
        assert_eq!(variety_centroid(VarietyCode::NM), (4.45, 2.86));
        assert_eq!(variety_centroid(VarietyCode::YB), (4.59, 2.62));
        assert_eq!(variety_centroid(VarietyCode::WC), (6.63, 2.44));
        assert_eq!(variety_centroid(VarietyCode::PJX), (4.82, 2.83));
        assert_eq!(variety_centroid(VarietyCode::WN), (6.81, 2.20));
        for v in VarietyTable::default().entries() {
            assert!(v.avg_length_mm > v.avg_width_mm && v.avg_width_mm > 0.0);
        }
    }

    #[test]
    fn standard_rows() {
        let r = standard_row(Branch::Indica, 1).unwrap();
        assert_eq!(
            (r.max_broken_rate, r.max_small_broken_rate, r.max_chalk_rate, r.max_admixture_rate),
            (0.15, 0.01, Some(0.02), 0.05)
        );
        let r = standard_row(Branch::Japonica, 3).unwrap();
        assert_eq!((r.max_broken_rate, r.max_small_broken_rate, r.max_chalk_rate), (0.20, 0.02, Some(0.06)));
        let r = standard_row(Branch::GlutinousIndica, 2).unwrap();
        assert_eq!((r.max_broken_rate, r.max_small_broken_rate, r.max_chalk_rate), (0.25, 0.025, None));
    }

    #[test]
    fn invalid_levels() {
        assert!(matches!(standard_row(Branch::GlutinousJaponica, 3), Err(Error::OutOfRange { .. })));
        assert!(standard_row(Branch::Indica, 0).is_err());
        assert!(standard_row(Branch::Indica, 4).is_err());
    }

    #[test]
    fn broken_limits_strictly_increase() {
        let table = StandardsTable::default();
        for branch in Branch::ALL {
            let rows: Vec<_> = table.branch_rows(branch).collect();
            assert_eq!(rows.len(), branch.max_level() as usize);
            for w in rows.windows(2) {
                assert!(w[0].max_broken_rate < w[1].max_broken_rate);
            }
            for r in rows {
                assert_eq!(r.max_chalk_rate.is_some(), !branch.is_glutinous());
            }
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let table = StandardsTable::default();
        let back = StandardsTable::from_json(&table.to_json()).unwrap();
        assert_eq!(back, table);

        let mut rows = table.rows().to_vec();
        rows.retain(|r| !(r.branch == Branch::Indica && r.level == 2));
        assert!(StandardsTable::new(rows).is_err());

        let mut rows = table.rows().to_vec();
        rows[0].max_broken_rate = 0.5;
        assert!(StandardsTable::new(rows).is_err());

        assert!(StandardsTable::from_json("{").is_err());
    }

    #[test]
    fn branch_override() {
        let t = VarietyTable::default().with_branch(VarietyCode::NM, Branch::GlutinousIndica);
        assert_eq!(t.get(VarietyCode::NM).branch, Branch::GlutinousIndica);
        assert_eq!(VarietyTable::default().get(VarietyCode::NM).branch, Branch::GlutinousJaponica);
    }

    #[test]
    fn parse_codes() {
        assert_eq!("pjx".parse::<VarietyCode>().unwrap(), VarietyCode::PJX);
        assert!("XX".parse::<VarietyCode>().is_err());
        assert_eq!("glutinousindica".parse::<Branch>().unwrap(), Branch::GlutinousIndica);
    }
}
