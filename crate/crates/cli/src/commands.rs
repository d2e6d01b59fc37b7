//! Subcommand implementations.
//!
//! Exit codes: 0 when every input was processed, 1 when some inputs failed,
//! 2 when nothing could be processed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use ricegrade_core::attention::{self, EcaParams, SimamParams, Tensor4, TensorStats};
use ricegrade_core::chalk::{self, ChalkMask, SweepRow};
use ricegrade_core::grading::{self, GradeContext, SampleReport};
use ricegrade_core::model::CompletenessClass;
use ricegrade_core::overlay;
use ricegrade_core::segmentation::Grain;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::ingest;
use crate::manifest::{hash_file, FileError, InputEntry, RunManifest};
use crate::pipeline::{self, file_name};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    /// Lines for stdout.
    pub messages: Vec<String>,
    /// Lines for stderr.
    pub diagnostics: Vec<String>,
}

impl Outcome {
    fn failure(msg: impl Into<String>) -> Self {
        Self { exit_code: EXIT_FAILURE, messages: Vec::new(), diagnostics: vec![msg.into()] }
    }
}

fn exit_code(processed: usize, failed: usize) -> i32 {
    match (processed, failed) {
        (_, 0) => EXIT_OK,
        (0, _) => EXIT_FAILURE,
        _ => EXIT_PARTIAL,
    }
}

const READABLE: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// A single file, or the readable images directly inside a directory in
/// sorted order.
pub fn list_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("input {} does not exist", input.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| READABLE.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Maps `f` over `items` on a bounded pool; output order follows input order.
fn run_pool<T, R, F>(cfg: &PipelineConfig, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.worker_count()).build()?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn hash_inputs(paths: &[PathBuf]) -> Vec<InputEntry> {
    paths
        .iter()
        .filter_map(|p| hash_file(p).ok().map(|h| InputEntry { path: p.display().to_string(), sha256: h }))
        .collect()
}

fn prepare_output(cfg: &PipelineConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(cfg.output_dir.clone())
}

fn analyze_one(path: &Path, cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let analysis = pipeline::analyze_file(path, cfg)?;
    let report = analysis.report(cfg)?;
    let name = file_name(path);
    let report_path = out.join(format!("{name}.report.json"));
    write_json(&report_path, &report)?;
    let mut written = vec![report_path.display().to_string()];
    if cfg.annotate {
        let boxes = out.join(format!("{name}.annotated.png"));
        overlay::annotate_grains(&analysis.image, &analysis.grains)
            .save(&boxes)
            .with_context(|| format!("writing {}", boxes.display()))?;
        let chalk_path = out.join(format!("{name}.chalk.png"));
        let (w, h) = (report.width, report.height);
        overlay::chalk_overlay(w, h, &analysis.grains, &analysis.masks, true)
            .save(&chalk_path)
            .with_context(|| format!("writing {}", chalk_path.display()))?;
        written.push(boxes.display().to_string());
        written.push(chalk_path.display().to_string());
    }
    Ok(written)
}

/// Per-image reports (and overlays with `annotate`) plus a run manifest.
pub fn cmd_analyze(input: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let start = Instant::now();
    let paths = match list_inputs(input) {
        Ok(p) => p,
        Err(e) => return Ok(Outcome::failure(format!("{e:#}"))),
    };
    if paths.is_empty() {
        return Ok(Outcome::failure(format!("no readable images in {}", input.display())));
    }
    let out = prepare_output(cfg)?;
    let results = run_pool(cfg, &paths, |p| analyze_one(p, cfg, &out))?;

    let mut manifest = RunManifest::new("analyze", cfg);
    manifest.inputs = hash_inputs(&paths);
    let mut outcome = Outcome::default();
    let mut ok = 0;
    for (p, r) in paths.iter().zip(results) {
        match r {
            Ok(files) => {
                ok += 1;
                manifest.reports.extend(files);
            }
            Err(e) => {
                outcome.diagnostics.push(format!("{}: {e:#}", p.display()));
                manifest.errors.push(FileError { path: p.display().to_string(), error: format!("{e:#}") });
            }
        }
    }
    manifest.elapsed_ms = start.elapsed().as_millis();
    manifest.write(&out)?;
    outcome.exit_code = exit_code(ok, manifest.errors.len());
    outcome.messages.push(format!("analyzed {ok} of {} images into {}", paths.len(), out.display()));
    Ok(outcome)
}

/// Sample report as written by `grade`: the config and inputs alongside the
/// report fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeOutput {
    pub config: PipelineConfig,
    pub inputs: Vec<String>,
    #[serde(flatten)]
    pub report: SampleReport,
}

pub fn summary_csv(report: &SampleReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "declared_variety",
        "branch",
        "n_grains",
        "whole",
        "sizeable_broken",
        "tiny_broken",
        "excluded_fragments",
        "small_broken_rate",
        "broken_rate",
        "chalkiness",
        "admixture_rate",
        "grade",
        "mass_basis",
    ])?;
    let count = |c| report.class_counts.get(&c).copied().unwrap_or(0).to_string();
    w.write_record([
        report.declared_variety.to_string(),
        format!("{:?}", report.branch),
        report.n_grains.to_string(),
        count(CompletenessClass::Whole),
        count(CompletenessClass::SizeableBroken),
        count(CompletenessClass::TinyBroken),
        report.excluded_fragments.to_string(),
        report.small_broken_rate.to_string(),
        report.broken_rate.to_string(),
        report.chalkiness.to_string(),
        report.admixture_rate.to_string(),
        report.grade.to_string(),
        format!("{:?}", report.mass_basis),
    ])?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

type Analyzed = (Vec<Grain>, Vec<ChalkMask>);

/// One sample report over every grain found in the inputs.
pub fn cmd_grade(input: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let start = Instant::now();
    let paths = match list_inputs(input) {
        Ok(p) => p,
        Err(e) => return Ok(Outcome::failure(format!("{e:#}"))),
    };
    if paths.is_empty() {
        return Ok(Outcome::failure(format!("no readable images in {}", input.display())));
    }
    let standards = cfg.standards()?;
    let varieties = cfg.varieties();
    let results: Vec<Result<Analyzed>> = run_pool(cfg, &paths, |p| {
        let a = pipeline::analyze_file(p, cfg)?;
        Ok((a.grains, a.masks))
    })?;

    let mut outcome = Outcome::default();
    let mut manifest = RunManifest::new("grade", cfg);
    manifest.inputs = hash_inputs(&paths);
    let (mut grains, mut masks, mut ok, mut names) = (Vec::new(), Vec::new(), 0, Vec::new());
    for (p, r) in paths.iter().zip(results) {
        match r {
            Ok((g, m)) => {
                ok += 1;
                names.push(file_name(p));
                grains.extend(g);
                masks.extend(m);
            }
            Err(e) => {
                outcome.diagnostics.push(format!("{}: {e:#}", p.display()));
                manifest.errors.push(FileError { path: p.display().to_string(), error: format!("{e:#}") });
            }
        }
    }
    let out = prepare_output(cfg)?;
    if grains.is_empty() {
        manifest.elapsed_ms = start.elapsed().as_millis();
        manifest.write(&out)?;
        outcome.exit_code = EXIT_FAILURE;
        outcome.diagnostics.push(format!("no grains detected in {} input image(s); nothing to grade", paths.len()));
        return Ok(outcome);
    }

    let ctx = GradeContext {
        declared: cfg.declared_variety,
        varieties: &varieties,
        standards: &standards,
        options: cfg.grade_options(),
    };
    let report = match grading::grade_sample(&grains, &masks, None, &ctx) {
        Ok(r) => r,
        Err(e) => {
            outcome.exit_code = EXIT_FAILURE;
            outcome.diagnostics.push(format!("grading failed: {e}"));
            return Ok(outcome);
        }
    };
    let json_path = out.join("sample_report.json");
    let csv_path = out.join("sample_report.csv");
    let csv_text = summary_csv(&report)?;
    write_json(&json_path, &GradeOutput { config: cfg.clone(), inputs: names, report: report.clone() })?;
    std::fs::write(&csv_path, csv_text).with_context(|| format!("writing {}", csv_path.display()))?;
    manifest.reports = vec![json_path.display().to_string(), csv_path.display().to_string()];
    manifest.elapsed_ms = start.elapsed().as_millis();
    manifest.write(&out)?;

    outcome.exit_code = exit_code(ok, manifest.errors.len());
    outcome.messages.push(format!(
        "{} grains, broken {:.2}%, small broken {:.2}%, chalkiness {:.2}%, admixture {:.2}% -> grade {}",
        report.n_grains,
        report.broken_rate * 100.0,
        report.small_broken_rate * 100.0,
        report.chalkiness * 100.0,
        report.admixture_rate * 100.0,
        report.grade
    ));
    Ok(outcome)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Chalk ratio of one grain across the five brightness levels.
pub fn cmd_sweep(image: &Path, grain_id: usize, cfg: &PipelineConfig) -> Result<Outcome> {
    let raw = match pipeline::load_image(image, cfg) {
        Ok(r) => r,
        Err(e) => return Ok(Outcome::failure(format!("{e:#}"))),
    };
    let analysis = pipeline::analyze_gray(&file_name(image), &raw, cfg)?;
    let Some(grain) = analysis.grains.iter().find(|g| g.component_id == grain_id) else {
        return Ok(Outcome::failure(format!(
            "grain {grain_id} not found; {} has {} grain(s)",
            image.display(),
            analysis.grains.len()
        )));
    };
    let base = ricegrade_core::imgproc::contrast_stretch(&raw);
    let rows = chalk::luminance_sweep(&base, grain, &cfg.chalk(), &cfg.brightness())?;
    let monotone = chalk::is_monotone(&rows);

    let out = prepare_output(cfg)?;
    let path = out.join(format!("{}.grain{grain_id}.sweep.csv", file_name(image)));
    std::fs::write(&path, sweep_csv(&rows)?).with_context(|| format!("writing {}", path.display()))?;
    let mut outcome = Outcome::default();
    for r in &rows {
        outcome.messages.push(format!("level {}: {:.4}", r.level, r.chalk_ratio));
    }
    outcome.messages.push(format!("monotone non-decreasing: {}", if monotone { "yes" } else { "no" }));
    outcome.messages.push(format!("wrote {}", path.display()));
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnKind {
    Simam,
    Eca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnSummary {
    pub kind: AttnKind,
    pub shape: [usize; 4],
    pub added_parameters: usize,
    pub output_stats: TensorStats,
}

/// Applies one attention block to a tensor file.
pub fn cmd_attn(
    kind: AttnKind,
    tensor_path: &Path,
    simam_params: &SimamParams,
    eca_params: &EcaParams,
    cfg: &PipelineConfig,
) -> Result<Outcome> {
    let text = match std::fs::read_to_string(tensor_path) {
        Ok(t) => t,
        Err(e) => return Ok(Outcome::failure(format!("{}: {e}", tensor_path.display()))),
    };
    let x = match Tensor4::from_json(&text) {
        Ok(x) => x,
        Err(e) => return Ok(Outcome::failure(format!("{}: {e}", tensor_path.display()))),
    };
    let (y, added) = match kind {
        AttnKind::Simam => (attention::simam(&x, simam_params), attention::SIMAM_PARAMETERS),
        AttnKind::Eca => (attention::eca(&x, eca_params), eca_params.kernel_size(x.shape()[1]).unwrap_or(0)),
    };
    let y = match y {
        Ok(y) => y,
        Err(e) => return Ok(Outcome::failure(format!("{}: {e}", tensor_path.display()))),
    };
    let out = prepare_output(cfg)?;
    let stem = tensor_path.file_stem().map_or("tensor".into(), |s| s.to_string_lossy().into_owned());
    let kind_name = match kind {
        AttnKind::Simam => "simam",
        AttnKind::Eca => "eca",
    };
    let path = out.join(format!("{stem}.{kind_name}.json"));
    std::fs::write(&path, y.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    let summary = AttnSummary { kind, shape: y.shape(), added_parameters: added, output_stats: TensorStats::of(&y) };
    Ok(Outcome {
        exit_code: EXIT_OK,
        messages: vec![
            format!("added parameters: {}", summary.added_parameters),
            format!(
                "output shape {:?}: min {:.6} max {:.6} mean {:.6} std {:.6}",
                summary.shape,
                summary.output_stats.min,
                summary.output_stats.max,
                summary.output_stats.mean,
                summary.output_stats.std
            ),
            format!("wrote {}", path.display()),
        ],
        diagnostics: Vec::new(),
    })
}

/// Writes `catalog.json` for a variety-per-subdirectory dataset.
pub fn cmd_ingest(root: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let catalog = match ingest::ingest_dataset(root, &cfg.completeness_tokens) {
        Ok(c) => c,
        Err(e) => return Ok(Outcome::failure(format!("{e:#}"))),
    };
    let out = prepare_output(cfg)?;
    let path = out.join("catalog.json");
    write_json(&path, &catalog)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        messages: vec![
            format!("{} entries, {} variety label(s)", catalog.entries.len(), catalog.labels().len()),
            format!("wrote {}", path.display()),
        ],
        diagnostics: catalog.warnings.iter().map(|w| format!("warning: {w}")).collect(),
    })
}
