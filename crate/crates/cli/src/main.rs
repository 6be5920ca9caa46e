//! Batch command-line pipeline: dataset synthesis, training, inference,
//! localization, evaluation and self-verification.
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 configuration
//! error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use acsloc_core::config::{ConfigError, GridChoice, RunConfig};
use acsloc_core::pipeline::{self, PipelineError};
use acsloc_core::verify;

#[derive(Parser)]
#[command(
    name = "acsloc",
    about = "Weakly-supervised temporal action localization with action-context separation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.resolve();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset into the output directory.
    Synth(ConfigArgs),
    /// Train on the `train` split; writes checkpoint.bin and losses.csv.
    Train(ConfigArgs),
    /// Run inference over the `test` split; writes dump/.
    Infer(ConfigArgs),
    /// Produce detections.jsonl from the inference dump.
    Localize {
        #[command(flatten)]
        config: ConfigArgs,
        /// Ablation variant 0..=5 overriding the config.
        #[arg(long)]
        variant: Option<usize>,
    },
    /// Evaluate detections.jsonl; writes eval_report.json and .csv.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Threshold grid: `thumos` or `anet`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Run the built-in verification suite.
    Verify,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(threads) = std::env::var("ACSLOC_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match &err {
                CliError::Config(_) => 2,
                CliError::Pipeline(p) => p.exit_code(),
            };
            ExitCode::from(code as u8)
        }
    }
}

enum CliError {
    Config(ConfigError),
    Pipeline(PipelineError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Pipeline(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

fn run() -> Result<ExitCode, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(args) => {
            let cfg = args.load()?;
            let stats = pipeline::cmd_synth(&cfg)?;
            println!(
                "synthesized {} videos ({} snippets) into {}",
                stats.videos,
                stats.snippets,
                cfg.out_dir.display()
            );
            println!(
                "background fraction {:.3}, {:.2} instances per video",
                stats.background_fraction, stats.instances_per_video
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let checkpoint = pipeline::cmd_train(&cfg)?;
            let last = checkpoint.history.last();
            println!(
                "trained {} epochs; final mean loss {}",
                checkpoint.epoch,
                last.map_or("n/a".to_string(), |b| format!("{:.6}", b.total))
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Infer(args) => {
            let cfg = args.load()?;
            let count = pipeline::cmd_infer(&cfg)?;
            println!(
                "wrote {} video dumps to {}",
                count,
                pipeline::dump_dir(&cfg.out_dir).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Localize { config, variant } => {
            let mut cfg = config.load()?;
            if let Some(v) = variant {
                cfg.localize.variant = v;
                cfg.localize.use_p1 = None;
                cfg.localize.use_p2 = None;
                cfg.localize.use_p3 = None;
                cfg.localize.scoring = None;
            }
            cfg.localize.variant_config()?;
            let dets = pipeline::cmd_localize(&cfg)?;
            println!(
                "wrote {} detections to {}",
                dets.len(),
                pipeline::detections_path(&cfg.out_dir).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { config, grid } => {
            let mut cfg = config.load()?;
            if let Some(g) = grid {
                cfg.eval.grid = GridChoice::parse(&g)?;
            }
            let report = pipeline::cmd_eval(&cfg)?;
            for (thr, map) in report.thresholds.iter().zip(&report.map_per_threshold) {
                println!("mAP@{thr:.2} = {map:.4}");
            }
            println!("average mAP = {:.4}", report.average_map);
            for diag in &report.diagnostics {
                println!(
                    "set {:>7}: {} snippets, A1 {}, Rz {}, avg mAP {:.4}",
                    diag.set,
                    diag.snippets,
                    diag.a1.map_or("n/a".into(), |v| format!("{v:.3}")),
                    diag.rz.map_or("n/a".into(), |v| format!("{v:.3}")),
                    diag.avg_map
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let results = verify::run_all();
            print!("{}", verify::render_table(&results));
            let failures = results.iter().filter(|r| !r.passed).count();
            if failures > 0 {
                println!("{failures} check(s) failed");
                Ok(ExitCode::from(1))
            } else {
                println!("all {} checks passed", results.len());
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}
