use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carapace::cli::{
    cmd_describe, cmd_evaluate, cmd_preprocess, cmd_synth, parse_fold_mode, parse_threshold_grid,
    CliError, DescribeSummary, RunConfig,
};
use carapace::hog::HogParams;
use carapace::keypoint::KeypointParams;
use carapace::pipeline::{DescriptorConfig, DescriptorKind, EvalSettings, SmoothingParams};
use carapace::synthetic::SurrogateConfig;

#[derive(Parser)]
#[command(
    name = "carapace",
    version,
    about = "Identify individual sea turtles from carapace images"
)]
struct Cli {
    /// Worker threads for descriptor extraction and fold evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write smoothed, window-sized ROIs as PGM files.
    Preprocess(Common),
    /// Dump the descriptor of one sample.
    Describe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sample: String,
    },
    /// Cross-validated evaluation: report.json, roc.csv, confusion.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `start:end:step` or a comma-separated list.
        #[arg(long, default_value = "0:1:0.1")]
        threshold_grid: String,
        /// Ratio threshold for the confusion matrix.
        #[arg(long, default_value_t = 0.9)]
        operating_threshold: f64,
        /// `loo` or a fold count.
        #[arg(long, default_value = "loo")]
        folds: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate the synthetic carapace surrogate dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        per_class: usize,
        #[arg(long, default_value_t = SurrogateConfig::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = DescriptorKind::Hog)]
    descriptor: DescriptorKind,
    #[arg(long, default_value_t = 4)]
    kernel_size: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 96)]
    window_width: usize,
    #[arg(long, default_value_t = 128)]
    window_height: usize,
    /// Keypoint ratio-test threshold.
    #[arg(long, default_value_t = 0.8)]
    acceptance_threshold: f64,
    #[arg(long, default_value_t = 20.0)]
    fast_threshold: f64,
    #[arg(long, default_value_t = 500)]
    max_keypoints: usize,
}

impl Common {
    fn config(&self, evaluation: EvalSettings) -> RunConfig {
        RunConfig {
            manifest: self.manifest.clone(),
            out: self.out.clone(),
            descriptor: DescriptorConfig {
                kind: self.descriptor,
                hog: HogParams {
                    window_w: self.window_width,
                    window_h: self.window_height,
                    ..HogParams::default()
                },
                smoothing: SmoothingParams {
                    kernel_size: self.kernel_size,
                    sigma: self.sigma,
                },
                keypoint: KeypointParams {
                    fast_threshold: self.fast_threshold,
                    max_keypoints: self.max_keypoints,
                    ..KeypointParams::default()
                },
                acceptance_threshold: self.acceptance_threshold,
            },
            evaluation,
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess(common) => {
            let summary = cmd_preprocess(&common.config(EvalSettings::default()))?;
            println!("wrote {} ROI images", summary.written.len());
        }
        Command::Describe { common, sample } => {
            match cmd_describe(&common.config(EvalSettings::default()), &sample)? {
                DescribeSummary::Hog {
                    length,
                    block_norm_min,
                    block_norm_mean,
                    block_norm_max,
                    all_zero,
                    ..
                } => {
                    println!("descriptor length: {length}");
                    println!(
                        "block norms: min {block_norm_min:.4} mean {block_norm_mean:.4} max {block_norm_max:.4}"
                    );
                    if all_zero {
                        println!("note: descriptor is all zero (no gradient in the ROI)");
                    }
                }
                DescribeSummary::Keypoint { count, .. } => {
                    println!("keypoints: {count}");
                    if count == 0 {
                        println!("note: no keypoints detected");
                    }
                }
            }
        }
        Command::Evaluate {
            common,
            threshold_grid,
            operating_threshold,
            folds,
            seed,
        } => {
            let settings = EvalSettings {
                fold_mode: parse_fold_mode(&folds)?,
                seed,
                thresholds: parse_threshold_grid(&threshold_grid)?,
                operating_threshold,
            };
            let report = cmd_evaluate(&common.config(settings))?;
            println!("operating threshold: {}", report.operating_threshold);
            match report.macro_accuracy {
                Some(acc) => println!("average accuracy (macro): {acc:.4}"),
                None => println!("average accuracy (macro): undefined (a class has no queries)"),
            }
            if let Some(acc) = report.micro_accuracy {
                println!("accuracy (micro): {acc:.4}");
            }
            println!("chance: {:.4}", report.chance_accuracy);
            println!("ROC area: {:.4}", report.roc_auc);
        }
        Command::Synth {
            out,
            classes,
            per_class,
            seed,
        } => {
            let cfg = SurrogateConfig {
                classes,
                per_class,
                seed,
                ..SurrogateConfig::default()
            };
            let manifest = cmd_synth(&out, &cfg)?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
