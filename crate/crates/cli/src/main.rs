use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use ricegrade::commands::{self, AttnKind, Outcome};
use ricegrade::config::PipelineConfig;
use ricegrade_core::attention::{EcaParams, SimamParams};
use ricegrade_core::model::VarietyCode;

#[derive(Parser)]
#[command(name = "ricegrade", version, about = "Rice grain appearance analysis and grading")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Millimetres per pixel.
    #[arg(long, global = true)]
    calibration: Option<f64>,
    /// Declared variety code (GD, NM, WC, PJX, WN, YB).
    #[arg(long, global = true)]
    variety: Option<VarietyCode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write annotated and chalk overlay images.
    #[arg(long, global = true)]
    annotate: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Simam,
    Eca,
}

#[derive(Subcommand)]
enum Command {
    /// Measure grains and chalk in an image or a directory of images.
    Analyze { input: PathBuf },
    /// Grade all grains found in the inputs as one sample.
    Grade { input: PathBuf },
    /// Chalk ratio of one grain across the five brightness levels.
    Sweep {
        image: PathBuf,
        #[arg(long)]
        grain: usize,
    },
    /// Apply an attention block to a tensor stored as JSON.
    Attn {
        kind: Kind,
        tensor: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        /// Fixed ECA kernel size instead of the adaptive one.
        #[arg(long)]
        kernel: Option<usize>,
    },
    /// Catalog a dataset laid out as one directory per variety.
    Ingest { root: PathBuf },
    /// Print the effective configuration as TOML.
    Config,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = cli.calibration {
        cfg.calibration_mm_per_px = c;
    }
    if let Some(v) = cli.variety {
        cfg.declared_variety = v;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.annotate |= cli.annotate;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Analyze { input } => commands::cmd_analyze(input, &cfg),
        Command::Grade { input } => commands::cmd_grade(input, &cfg),
        Command::Sweep { image, grain } => commands::cmd_sweep(image, *grain, &cfg),
        Command::Attn { kind, tensor, lambda, kernel } => {
            let kind = match kind {
                Kind::Simam => AttnKind::Simam,
                Kind::Eca => AttnKind::Eca,
            };
            let eca = EcaParams { kernel_override: *kernel, ..EcaParams::default() };
            commands::cmd_attn(kind, tensor, &SimamParams { lambda: *lambda }, &eca, &cfg)
        }
        Command::Ingest { root } => commands::cmd_ingest(root, &cfg),
        Command::Config => Ok(Outcome { messages: vec![cfg.to_toml()], ..Outcome::default() }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            for m in &outcome.messages {
                if writeln!(stdout, "{m}").is_err() {
                    break;
                }
            }
            for d in &outcome.diagnostics {
                eprintln!("{d}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_FAILURE as u8)
        }
    }
}
