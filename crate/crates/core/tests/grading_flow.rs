use ricegrade_core::chalk::{self, ChalkParams};
use ricegrade_core::grading::{grade_sample, Grade, GradeContext, GradeOptions, MassBasis};
use ricegrade_core::imgproc::{self, GrayImage};
use ricegrade_core::model::{CompletenessClass, StandardsTable, VarietyCode, VarietyTable};
use ricegrade_core::segmentation::{detect_grains, DetectConfig};

/// Axis-aligned ellipses `(cx, cy, semi_x, semi_y, chalky_core)` on a dark background.
fn scene(w: usize, h: usize, grains: &[(f64, f64, f64, f64, bool)]) -> GrayImage {
    GrayImage::from_fn(w, h, 0.05, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = 20;
        for &(cx, cy, a, b, chalky) in grains {
            let r = ((px - cx) / a).powi(2) + ((py - cy) / b).powi(2);
            if r <= 1.0 {
                v = if chalky && r <= 0.2 { 240 } else { 150 };
            }
        }
        v
    })
    .unwrap()
}

fn grade(img: &GrayImage, declared: VarietyCode) -> ricegrade_core::grading::SampleReport {
    let img = imgproc::contrast_stretch(img);
    let grains = detect_grains(&img, &DetectConfig::default()).unwrap();
    let masks: Vec<_> =
        grains.iter().map(|g| chalk::segment_chalk(g, &img, &ChalkParams::default()).unwrap()).collect();
    let varieties = VarietyTable::default();
    let standards = StandardsTable::default();
    let ctx = GradeContext { declared, varieties: &varieties, standards: &standards, options: GradeOptions::default() };
    grade_sample(&grains, &masks, None, &ctx).unwrap()
}

#[test]
fn clean_batch_grades_level_one() {
    let grains: Vec<_> = (0..3).map(|i| (80.0 + 160.0 * i as f64, 60.0, 67.4, 17.4, false)).collect();
    let report = grade(&scene(480, 120, &grains), VarietyCode::GD);
    assert_eq!(report.n_grains, 3);
    assert_eq!(report.class_counts[&CompletenessClass::Whole], 3);
    assert_eq!(report.broken_rate, 0.0);
    assert_eq!(report.chalkiness, 0.0);
    assert_eq!(report.admixture_rate, 0.0);
    assert_eq!(report.mass_basis, MassBasis::AreaProxy);
    assert_eq!(report.grade, Grade::Level(1));
}

#[test]
fn chalky_batch_is_downgraded() {
    let grains: Vec<_> = (0..3).map(|i| (80.0 + 160.0 * i as f64, 60.0, 67.4, 17.4, i == 0)).collect();
    let report = grade(&scene(480, 120, &grains), VarietyCode::GD);
    let chalk = report.chalk.unwrap();
    assert_eq!((chalk.n1, chalk.n0), (1, 3));
    assert!((chalk.w_d - 0.2).abs() < 0.03, "{}", chalk.w_d);
    assert!(report.chalkiness > 0.05 && report.chalkiness <= 0.08, "{}", report.chalkiness);
    assert_eq!(report.grade, Grade::Level(3));
}

#[test]
fn broken_pieces_and_fragments() {
    let grains = [
        (80.0, 60.0, 67.4, 17.4, false),
        (240.0, 60.0, 67.4, 17.4, false),
        (360.0, 60.0, 30.0, 24.0, false),
        (430.0, 60.0, 20.0, 14.0, false),
        (480.0, 60.0, 12.0, 8.0, false),
    ];
    let report = grade(&scene(520, 120, &grains), VarietyCode::GD);
    assert_eq!(report.class_counts[&CompletenessClass::Whole], 2);
    assert_eq!(report.class_counts[&CompletenessClass::SizeableBroken], 1);
    assert_eq!(report.class_counts[&CompletenessClass::TinyBroken], 1);
    assert_eq!(report.excluded_fragments, 1);
    assert!(report.small_broken_rate > 0.0 && report.small_broken_rate < report.broken_rate);
    assert_eq!(report.grade, Grade::OffGrade);
}

#[test]
fn standards_json_round_trip() {
    let table = StandardsTable::default();
    assert_eq!(StandardsTable::from_json(&table.to_json()).unwrap(), table);
    assert!(StandardsTable::from_json("[]").is_err());
    assert!(StandardsTable::from_json("{").is_err());
}
