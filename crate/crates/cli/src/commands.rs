//! Implementations behind the command-line subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mf_core::analysis::{analyze_framework, segment_song, MusicFramework};
use mf_core::corpus::{load_annotated_song, read_song, split_dataset, Corpus, IndexEntry, PhraseAnnotation};
use mf_core::features::{song_sequences, Task, TaskSequence};
use mf_core::midi::{export_midi, parse_midi, TrackRoles, TrackSelector};
use mf_core::score::{transpose_to_c, Song};
use mf_core::Error as CoreError;
use mf_gen::eval::ControllabilityStats;
use mf_gen::{assemble_song, controllability_roundtrip, next_token_accuracy, tonic_stats, EvalReport, GenerationRequest, ModelSet, Policies, RoundTripMode};
use mf_neural::{checkpoint, train, ModelConfig, TrainConfig, TrainLog};
use serde::Deserialize;

/// Share of songs that go to the training split.
pub const TRAIN_RATIO: f64 = 0.9;

/// Per-song annotation: either a structure string like `i4A8B8o2` or explicit boundaries.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AnnotationEntry {
    Structure(String),
    Explicit(PhraseAnnotation),
}

impl AnnotationEntry {
    fn resolve(&self) -> mf_core::Result<PhraseAnnotation> {
        match self {
            AnnotationEntry::Structure(s) => PhraseAnnotation::parse(s),
            AnnotationEntry::Explicit(a) => Ok(a.clone()),
        }
    }
}

/// A track given on the command line: a number is an index, anything else a name.
pub fn track_selector(arg: &str) -> TrackSelector {
    arg.parse().map(TrackSelector::Index).unwrap_or_else(|_| TrackSelector::Name(arg.to_string()))
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub ingested: Vec<String>,
    /// (file, reason)
    pub skipped: Vec<(String, String)>,
}

/// Converts every `.mid`/`.midi` file in `midi_dir` into a corpus at `out`.
///
/// Songs with an annotation are split at its boundaries; the rest go through
/// structure analysis. Minor-mode and unparseable files are skipped.
pub fn ingest(midi_dir: &Path, annotations: Option<&Path>, out: &Path, roles: &TrackRoles) -> Result<IngestSummary> {
    let annotations: BTreeMap<String, AnnotationEntry> = match annotations {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => BTreeMap::new(),
    };
    let mut files: Vec<PathBuf> = fs::read_dir(midi_dir)
        .with_context(|| format!("reading {}", midi_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi")))
        .collect();
    files.sort();

    let mut corpus = Corpus::create(out)?;
    let mut summary = IngestSummary::default();
    for path in files {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let song = fs::read(&path).map_err(CoreError::from).and_then(|bytes| {
            let parsed = parse_midi(&id, &bytes, roles)?;
            for w in &parsed.warnings {
                log::warn!("{id}: {w}");
            }
            let song = transpose_to_c(&parsed.song)?;
            match annotations.get(&id) {
                Some(a) => load_annotated_song(&song, &a.resolve()?),
                None => segment_song(&song),
            }
        });
        match song {
            Ok(song) => {
                corpus.add_song(&song)?;
                summary.ingested.push(id);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                summary.skipped.push((id, e.to_string()));
            }
        }
    }
    corpus.save_index()?;
    Ok(summary)
}

pub fn analyze(song: &Path, out: &Path) -> Result<MusicFramework> {
    let song = read_song(song)?;
    let framework = analyze_framework(&song)?;
    fs::write(out, serde_json::to_vec_pretty(&framework)?)?;
    Ok(framework)
}

fn load_split(corpus: &Path, seed: u64) -> Result<(Vec<Song>, Vec<Song>)> {
    let corpus = Corpus::open(corpus).with_context(|| format!("opening corpus {}", corpus.display()))?;
    let (train, validation) = split_dataset(&corpus.index, seed, TRAIN_RATIO);
    let load = |entries: Vec<IndexEntry>| entries.iter().map(|e| corpus.load_song(e)).collect::<mf_core::Result<Vec<_>>>();
    Ok((load(train)?, load(validation)?))
}

fn sequences(task: Task, songs: &[Song]) -> Vec<TaskSequence> {
    songs.iter().flat_map(|s| song_sequences(task, s)).collect()
}

/// Writes each teacher-forced row of `seqs` as one JSON line.
pub fn dump_features(seqs: &[TaskSequence], out: &mut impl Write) -> Result<()> {
    for (i, seq) in seqs.iter().enumerate() {
        for (t, row) in seq.feature_rows().into_iter().enumerate() {
            let line = serde_json::json!({ "sequence": i, "step": t, "row": row, "target": seq.targets[t] });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub struct TrainOptions<'a> {
    pub task: Task,
    pub corpus: &'a Path,
    pub seed: u64,
    pub out: &'a Path,
    pub config: TrainConfig,
    pub model: ModelConfig,
    pub dump_features: Option<&'a Path>,
}

/// Trains one task model on the corpus training split and saves the best checkpoint.
pub fn train_task(opts: &TrainOptions) -> Result<TrainLog> {
    let (train_songs, validation_songs) = load_split(opts.corpus, opts.seed)?;
    let training = sequences(opts.task, &train_songs);
    let validation = sequences(opts.task, &validation_songs);
    if let Some(path) = opts.dump_features {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        dump_features(&training, &mut f)?;
        f.flush()?;
    }
    log::info!("{}: {} training and {} validation sequences", opts.task, training.len(), validation.len());
    let (params, log) = train(&opts.model, &training, &validation, &TrainConfig { seed: opts.seed, ..opts.config.clone() })?;
    if let Some(dir) = opts.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    checkpoint::save(opts.out, &params)?;
    Ok(log)
}

pub fn load_models(dir: &Path) -> Result<ModelSet> {
    let models = ModelSet::load_dir(dir).with_context(|| format!("loading models from {}", dir.display()))?;
    if !models.is_complete() {
        let missing: Vec<String> = Task::ALL.iter().filter(|t| models.get(**t).is_err()).map(|t| t.to_string()).collect();
        bail!("{} is missing checkpoints for {}", dir.display(), missing.join(", "));
    }
    Ok(models)
}

/// Generates a song from a framework file, optionally also writing MIDI.
pub fn generate(framework: &Path, models: &ModelSet, seed: u64, out: &Path, midi: Option<&Path>) -> Result<mf_gen::GeneratedSong> {
    let framework: MusicFramework = serde_json::from_slice(&fs::read(framework)?)?;
    let generated = assemble_song(&GenerationRequest::new(framework, seed), models)?;
    fs::write(out, serde_json::to_vec_pretty(&generated)?)?;
    if let Some(midi) = midi {
        fs::write(midi, export_midi(&generated.song))?;
    }
    Ok(generated)
}

/// Accuracy on the validation split, controllability on `phrases` validation
/// phrases, and tonic-ending rates of songs generated from validation frameworks.
pub fn evaluate(models: &ModelSet, corpus: &Path, seed: u64, phrases: usize) -> Result<EvalReport> {
    let (train_songs, mut validation) = load_split(corpus, seed)?;
    if validation.is_empty() {
        log::warn!("corpus has no validation split, evaluating on training songs");
        validation = train_songs;
    }
    let mut report = EvalReport::default();
    for task in Task::ALL {
        let seqs = sequences(task, &validation);
        report.accuracy.insert(task, next_token_accuracy(models.get(task)?, &seqs)?);
        report.samples.insert(task, seqs.len());
    }
    let policies = Policies::default();
    let controllability: ControllabilityStats = controllability_roundtrip(models, &validation, phrases, RoundTripMode::Generate, &policies, seed)?;
    report.controllability = Some(controllability);
    let generated = validation
        .iter()
        .map(|s| Ok(assemble_song(&GenerationRequest::new(analyze_framework(s)?, seed), models)?.song))
        .collect::<Result<Vec<_>>>()?;
    report.tonic = Some(tonic_stats(&generated)?);
    Ok(report)
}
