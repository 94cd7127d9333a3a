use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gdtm::error::{Error, Result};
use gdtm::signal::EdgeSelector;
use gdtm_cli::commands::{
    cmd_attention, cmd_eval, cmd_generate, cmd_rollout, cmd_train, cmd_transfer, TransferTarget,
};
use gdtm_cli::config::ExperimentConfig;
use gdtm_cli::exit_code;

/// Graph-based digital twin modelling: simulate, train, roll out, evaluate.
#[derive(Parser)]
#[command(name = "gdtm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration file; defaults reproduce the reference
    /// 10-DOF study.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth episodes and a dataset manifest.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for episode CSVs and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Master seed override for dataset generation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a surrogate on a generated dataset.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Manifest written by `generate`.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for checkpoint.json and loss_history.csv.
        #[arg(long)]
        out: PathBuf,
        /// Training seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Roll a checkpoint forward on a graph under a given excitation.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Structure description (vertex_count=/grounded=/edge= lines).
        #[arg(long)]
        graph: PathBuf,
        /// Excitation file: a full episode CSV or step,time_s,vertex,excitation_N.
        #[arg(long)]
        excitation: PathBuf,
        /// Output path for the predicted episode CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-step attention coefficients (attention surrogates).
        #[arg(long)]
        capture_attention: bool,
    },
    /// Compare a predicted episode against ground truth.
    Eval {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Output path for the metrics CSV row.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-vertex Welch PSD files for both records.
        #[arg(long)]
        psd: bool,
        /// Directory for the PSD files (defaults beside the metrics file).
        #[arg(long)]
        psd_dir: Option<PathBuf>,
    },
    /// Evaluate one checkpoint across topologies and parameter scalings.
    Transfer {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated vertex counts to rebuild the chain at.
        #[arg(long, value_delimiter = ',')]
        dofs: Vec<usize>,
        /// Comma-separated parameter-scaling cases (0-3).
        #[arg(long, value_delimiter = ',')]
        cases: Vec<u8>,
        /// Evaluation episodes per excitation kind per target.
        #[arg(long, default_value_t = 2)]
        episodes_per_kind: usize,
        /// Seed for the evaluation excitations.
        #[arg(long, default_value_t = 41)]
        seed: u64,
        /// Output directory for transfer_summary.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract attention time histories (and optional spectrograms) from a
    /// rollout capture.
    Attention {
        /// Capture CSV written by `rollout --capture-attention`.
        #[arg(long)]
        capture: PathBuf,
        /// Graph file for edge-type labels; inferred from the capture when
        /// omitted.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Source vertex of one directed edge.
        #[arg(long)]
        from: Option<usize>,
        /// Target vertex of one directed edge.
        #[arg(long)]
        to: Option<usize>,
        /// All out-edges (plus self) of one vertex.
        #[arg(long)]
        vertex: Option<usize>,
        /// Also write a spectrogram per extracted series.
        #[arg(long)]
        stft: bool,
        #[arg(long, default_value_t = 256)]
        window: usize,
        #[arg(long, default_value_t = 128)]
        hop: usize,
        /// Sampling rate of the rollout, Hz.
        #[arg(long, default_value_t = 100.0)]
        fs: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let config = config.load()?;
            let summary = cmd_generate(&config, &out, seed)?;
            println!(
                "generated {} episodes ({} steps x {} vertices) -> {}",
                summary.episode_count,
                summary.steps,
                summary.vertices,
                summary.manifest_path.display()
            );
        }
        Command::Train { config, manifest, out, seed } => {
            let mut config = config.load()?;
            if let Some(seed) = seed {
                config.training.seed = seed;
            }
            let summary = cmd_train(&config, &manifest, &out)?;
            let last = summary.outcome.history.last().unwrap();
            println!(
                "trained {} epochs (best epoch {}, test loss {:.6e}); {} parameters, input width {}",
                summary.outcome.history.len(),
                summary.outcome.best_epoch,
                summary.outcome.best_test_loss,
                summary.parameter_count,
                summary.input_dim
            );
            println!(
                "final losses train {:.6e} / test {:.6e}; checkpoint -> {}",
                last.train,
                last.test,
                summary.checkpoint_path.display()
            );
        }
        Command::Rollout { checkpoint, graph, excitation, out, capture_attention } => {
            let summary = cmd_rollout(&checkpoint, &graph, &excitation, &out, capture_attention)?;
            println!(
                "rollout: {} steps at {:.0} steps/second -> {}",
                summary.steps,
                summary.steps_per_second,
                summary.out_path.display()
            );
            if let Some(path) = summary.attention_path {
                println!("attention capture -> {}", path.display());
            }
        }
        Command::Eval { predicted, truth, out, psd, psd_dir } => {
            let psd_dir = if psd {
                Some(psd_dir.unwrap_or_else(|| {
                    out.parent().map(|p| p.to_path_buf()).unwrap_or_default()
                }))
            } else {
                None
            };
            let report = cmd_eval(&predicted, &truth, &out, psd_dir.as_deref())?;
            println!(
                "nmse {:.6e}  r2 {:.4}  peak error {:.3}%  over {} samples",
                report.nmse, report.r_squared, report.peak_error_pct, report.sample_count
            );
        }
        Command::Transfer {
            config,
            checkpoint,
            dofs,
            cases,
            episodes_per_kind,
            seed,
            out,
        } => {
            let config = config.load()?;
            let mut targets: Vec<TransferTarget> =
                dofs.into_iter().map(TransferTarget::Dof).collect();
            targets.extend(cases.into_iter().map(TransferTarget::Case));
            let rows = cmd_transfer(&checkpoint, &config, &targets, episodes_per_kind, seed, &out)?;
            for (label, report) in &rows {
                println!(
                    "{label}: nmse {:.6e}  r2 {:.4}  peak error {:.3}%",
                    report.nmse, report.r_squared, report.peak_error_pct
                );
            }
        }
        Command::Attention {
            capture,
            graph,
            from,
            to,
            vertex,
            stft,
            window,
            hop,
            fs,
            out,
        } => {
            let selector = match (from, to, vertex) {
                (Some(from), Some(to), None) => EdgeSelector::Directed { from, to },
                (None, None, Some(v)) => EdgeSelector::Vertex(v),
                (None, None, None) => EdgeSelector::All,
                _ => {
                    return Err(Error::InvalidParameter(
                        "use either --from with --to, or --vertex, or neither".into(),
                    ))
                }
            };
            let summary =
                cmd_attention(&capture, graph.as_deref(), &selector, stft, window, hop, fs, &out)?;
            println!(
                "wrote {} attention series ({} spectrograms) -> {}",
                summary.series_paths.len(),
                summary.spectrogram_paths.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error) as u8)
        }
    }
}
