use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mf_cli::commands::{self, track_selector, TrainOptions};
use mf_cli::service::{serve, ApiSession};
use mf_cli::MODEL_DIR_ENV;
use mf_core::features::Task;
use mf_core::midi::TrackRoles;
use mf_gen::ModelSet;
use mf_neural::{ModelConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "musicframeworks", version, about = "Analyze pop songs into music frameworks and generate melodies from them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of MIDI files into a corpus directory.
    Ingest {
        #[arg(long)]
        midi_dir: PathBuf,
        /// JSON object mapping file stems to structure strings or phrase boundaries.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Melody track name fragment or index.
        #[arg(long, default_value = "melody")]
        melody_track: String,
        /// Chord track name fragment or index.
        #[arg(long, default_value = "chord")]
        chord_track: String,
    },
    /// Analyze a song JSON file into its music framework.
    Analyze {
        #[arg(long)]
        song: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one task model on a corpus.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        max_steps: u64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Write the training feature rows as JSON lines to this file.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Generate a song from a framework file.
    Generate {
        #[arg(long)]
        framework: PathBuf,
        #[arg(long, env = MODEL_DIR_ENV)]
        models: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Song plus generation report as JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        midi: Option<PathBuf>,
    },
    /// Evaluate trained models on a corpus's validation split.
    Eval {
        #[arg(long, env = MODEL_DIR_ENV)]
        models: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of phrases in the controllability round trip.
        #[arg(long, default_value_t = 50)]
        phrases: usize,
        /// Write the report as JSON here; the table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = MODEL_DIR_ENV)]
        models: Option<PathBuf>,
        #[arg(long, default_value_t = 8700)]
        port: u16,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest { midi_dir, annotations, out, melody_track, chord_track } => {
            let roles = TrackRoles { melody: track_selector(&melody_track), chords: track_selector(&chord_track) };
            let summary = commands::ingest(&midi_dir, annotations.as_deref(), &out, &roles)?;
            println!("ingested {} songs, skipped {}", summary.ingested.len(), summary.skipped.len());
            for (id, why) in &summary.skipped {
                println!("  skipped {id}: {why}");
            }
        }
        Command::Analyze { song, out } => {
            let fw = commands::analyze(&song, &out)?;
            println!("{}: {} phrases, structure {}", fw.id, fw.phrases.len(), fw.structure);
        }
        Command::Train { task, corpus, seed, out, max_steps, batch_size, dump_features } => {
            let opts = TrainOptions {
                task,
                corpus: &corpus,
                seed,
                out: &out,
                config: TrainConfig { max_steps, batch_size, ..Default::default() },
                model: ModelConfig::for_task(task),
                dump_features: dump_features.as_deref(),
            };
            let log = commands::train_task(&opts)?;
            println!(
                "{task}: {} steps, best validation accuracy {:.2}% at epoch {}, saved {}",
                log.steps,
                100.0 * log.best_accuracy,
                log.best_epoch,
                out.display()
            );
        }
        Command::Generate { framework, models, seed, out, midi } => {
            let models = commands::load_models(&models)?;
            let generated = commands::generate(&framework, &models, seed, &out, midi.as_deref())?;
            for p in &generated.report.phrases {
                let warn = if p.below_threshold { " (contour below threshold)" } else { "" };
                println!("phrase {} {}: seed {}{warn}", p.index, p.label, p.seed);
            }
        }
        Command::Eval { models, corpus, seed, phrases, out } => {
            let models = commands::load_models(&models)?;
            let report = commands::evaluate(&models, &corpus, seed, phrases)?;
            if let Some(out) = out {
                std::fs::write(out, serde_json::to_vec_pretty(&report)?)?;
            }
            std::io::stdout().write_all(report.table().as_bytes())?;
        }
        Command::Serve { models, port } => {
            let models = match models {
                Some(dir) => Some(commands::load_models(&dir)?),
                None => {
                    log::warn!("no model directory given; /generate will answer 409");
                    None::<ModelSet>
                }
            };
            let session = Arc::new(ApiSession::new(models));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(session, SocketAddr::from(([127, 0, 0, 1], port))))?;
        }
    }
    Ok(())
}
