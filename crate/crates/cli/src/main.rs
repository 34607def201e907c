//! Command-line interface: corpus simulation, training, extraction, and
//! evaluation.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tse_core::model::Model;
use tse_core::signal::{read_wav, simulate_corpus, write_wav, CleanIndex, NoiseIndex, Waveform};
use tse_core::training::{checkpoint, evaluate, train};
use tse_core::{RunConfig, TseError};

#[derive(Parser)]
#[command(name = "tse", version, about = "Time-domain target speaker extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a mixture corpus from a clean-speech index.
    Simulate {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Clean-speech index: one `speaker<TAB>wav-path` line per utterance.
        #[arg(long)]
        clean: PathBuf,
        /// Noise index (one wav path per line); required for noisy-mix.
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Output directory for audio and manifests.
        #[arg(long)]
        out: PathBuf,
        /// Simulation seed; defaults to the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write the best-dev checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training manifest (JSONL, as written by `simulate`).
        #[arg(long)]
        train_manifest: PathBuf,
        /// Development manifest used for early stopping.
        #[arg(long)]
        dev_manifest: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the target speaker from a mixture given reference speech.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Output wav path for the extracted speech.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint against a manifest and report SI-SDR.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Optional JSONL report output path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn load_model(path: &PathBuf) -> tse_core::Result<(checkpoint::CheckpointHeader, Model, tse_core::nn::ParamStore)> {
    let (header, store) = checkpoint::load(path)?;
    header.config.validate()?;
    let model = Model::new(&header.config, header.speakers.len());
    Ok((header, model, store))
}

fn run(cli: Cli) -> tse_core::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            clean,
            noise,
            out,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let clean = CleanIndex::read(&clean)?;
            let noise = noise.as_deref().map(NoiseIndex::read).transpose()?;
            let seed = seed.unwrap_or(cfg.training.seed);
            let sim = simulate_corpus(&clean, noise.as_ref(), &cfg, seed, &out)?;
            println!("config hash {}", cfg.hash());
            for (split, path, manifest) in &sim.manifests {
                println!(
                    "{split}: {} entries -> {}",
                    manifest.entries.len(),
                    path.display()
                );
            }
        }
        Command::Train {
            config,
            train_manifest,
            dev_manifest,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = train(&cfg, &train_manifest, &dev_manifest, &out)?;
            println!("config hash {}", cfg.hash());
            println!(
                "trained {} epochs ({} steps); best dev loss {:.4} at epoch {}",
                outcome.epochs_run, outcome.steps, outcome.best_dev_loss, outcome.best_epoch
            );
            println!("checkpoint -> {}", out.display());
        }
        Command::Extract {
            checkpoint,
            mixture,
            reference,
            out,
        } => {
            let (header, model, store) = load_model(&checkpoint)?;
            let rate = header.config.signal.sample_rate;
            let mix = read_wav(&mixture, Some(rate))?;
            let reference = read_wav(&reference, Some(rate))?;
            let est = model.extract(&store, &mix.samples, &reference.samples)?;
            write_wav(&out, &Waveform::new(est, rate))?;
            println!("config hash {}", header.config_hash);
            println!("extracted -> {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            report,
        } => {
            let (header, model, store) = load_model(&checkpoint)?;
            let rep = evaluate(&model, &store, &header.config, &manifest)?;
            for record in &rep.records {
                if let tse_core::objectives::ReportRecord::Summary {
                    mixture_type,
                    count,
                    mean_si_sdr_db,
                    mean_input_si_sdr_db,
                    mean_si_sdr_improvement_db,
                } = record
                {
                    println!(
                        "{mixture_type}: n={count} si_sdr={mean_si_sdr_db} input={mean_input_si_sdr_db} improvement={mean_si_sdr_improvement_db}"
                    );
                }
            }
            if let Some(path) = report {
                rep.write(&path)?;
                println!("report -> {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // mistakes in how the tool was invoked or configured
                TseError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
