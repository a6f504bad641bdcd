//! `irmrf`: synthesize, train, detect, fuse and evaluate from the command line.
//!
//! On failure a single line `error kind=<kind> message=<text>` goes to stderr
//! and the process exits nonzero.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: String) -> Self {
        Self { kind: "config", message }
    }

    pub fn usage(message: String) -> Self {
        Self { kind: "usage", message }
    }

    fn line(&self) -> String {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error kind={} message={}", self.kind, flat)
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            "usage" | "config" => 2,
            _ => 1,
        }
    }
}

impl From<irmrf::error::Error> for Failure {
    fn from(e: irmrf::error::Error) -> Self {
        Self { kind: e.kind(), message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "irmrf", version, about = "Coupled SAR / auto-logistic MRF target detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset plus the parameter files that generated it.
    Synth {
        #[command(flatten)]
        common: Common,
        /// planted, poles, sequence or clean-sequence
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Fit target/background SAR models and the label prior from truth boxes.
    Train {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run ICM on every frame, write ratio maps, detections and the ROC.
    Detect {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Detect with and without background-subtraction fusion.
    Fuse {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute the ROC from ratio maps stored by `detect`.
    Eval {
        manifest: PathBuf,
        /// Output directory of a previous `detect` run.
        #[arg(long)]
        maps: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Directory holding the parameter files.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Number of quantile thresholds in the ROC ladder.
    #[arg(long = "ladder", value_name = "K")]
    ladder: Option<usize>,
    #[arg(long = "min-area", value_name = "N")]
    min_area: Option<usize>,
    /// Background-subtraction history length.
    #[arg(long = "bg-T")]
    bg_t: Option<usize>,
    #[arg(long = "bg-sigma")]
    bg_sigma: Option<f64>,
    #[arg(long = "bg-tau")]
    bg_tau: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.variant {
            cfg.variant = v.parse()?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.models {
            cfg.models = Some(v.clone());
        }
        if let Some(v) = self.ladder {
            cfg.ladder = v;
        }
        if let Some(v) = self.min_area {
            cfg.min_area = v;
        }
        if let Some(v) = self.bg_t {
            cfg.bg_t = v;
        }
        if let Some(v) = self.bg_sigma {
            cfg.bg_sigma = v;
        }
        if let Some(v) = self.bg_tau {
            cfg.bg_tau = v;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { common, scene, frames } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = scene {
                cfg.scene = s.parse()?;
            }
            if let Some(f) = frames {
                cfg.frames = f;
            }
            cfg.validate()?;
            commands::synth(&cfg, &common.out_dir)
        }
        Command::Train { manifest, common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            commands::train(&cfg, &manifest, &common.out_dir)
        }
        Command::Detect { manifest, common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            commands::detect(&cfg, &manifest, &common.out_dir)
        }
        Command::Fuse { manifest, common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            commands::fuse(&cfg, &manifest, &common.out_dir)
        }
        Command::Eval { manifest, maps, common } => {
            let cfg = common.resolve()?;
            cfg.validate()?;
            commands::eval(&cfg, &manifest, &maps, &common.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let f = Failure::usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", f.line());
            return ExitCode::from(f.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code())
        }
    }
}
