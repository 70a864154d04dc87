//! Annotated corpus files, the corpus index and dataset splits.
//!
//! A corpus directory holds one song JSON per song plus `index.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::group_sections;
use crate::error::{Error, Result};
use crate::score::{Mode, SectionKind, SectionLayout, Song};

pub const INDEX_FILE: &str = "index.json";

/// Phrase segmentation of a song.
///
/// `boundaries` are cumulative phrase end positions in measures, e.g.
/// `[8, 16, 24, 32]` for four 8-measure phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseAnnotation {
    pub boundaries: Vec<u32>,
    pub letters: Vec<String>,
    /// Section kind and phrase count per section; inferred when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sections: Option<Vec<(SectionKind, usize)>>,
}

impl PhraseAnnotation {
    /// Parses a compact structure string such as `i4A8A8B8x4A8B8o4`: each
    /// phrase is a letter followed by its length in measures. Lowercase `i`
    /// and `o` mark intro and outro phrases and any other lowercase letter a
    /// bridge; uppercase letters are melodic theme phrases.
    pub fn parse(structure: &str) -> Result<Self> {
        let mismatch = |m: &str| Error::AnnotationMismatch(format!("{m} in structure {structure:?}"));
        let mut letters = Vec::new();
        let mut lengths = Vec::new();
        let mut chars = structure.trim().chars().peekable();
        while let Some(c) = chars.next() {
            if !c.is_ascii_alphabetic() {
                return Err(mismatch("expected a letter"));
            }
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let len: u32 = digits.parse().map_err(|_| mismatch("missing phrase length"))?;
            if len == 0 {
                return Err(mismatch("zero-length phrase"));
            }
            letters.push(c.to_string());
            lengths.push(len);
        }
        let kinds: Vec<SectionKind> = letters
            .iter()
            .map(|l| match l.as_str() {
                "i" => SectionKind::Intro,
                "o" => SectionKind::Outro,
                l if l.chars().all(|c| c.is_ascii_lowercase()) => SectionKind::Bridge,
                _ => SectionKind::Theme,
            })
            .collect();
        let labels: Vec<&str> = letters.iter().map(String::as_str).collect();
        let sections = group_sections(&labels, &kinds);
        let boundaries = lengths
            .iter()
            .scan(0, |acc, l| {
                *acc += l;
                Some(*acc)
            })
            .collect();
        Ok(PhraseAnnotation { boundaries, letters, sections: Some(sections) })
    }

    fn layout(&self, song_measures: u32) -> Result<Vec<SectionLayout>> {
        if self.boundaries.len() != self.letters.len() || self.boundaries.is_empty() {
            return Err(Error::AnnotationMismatch(format!(
                "{} boundaries for {} letters",
                self.boundaries.len(),
                self.letters.len()
            )));
        }
        let mut prev = 0;
        let mut lengths = Vec::with_capacity(self.boundaries.len());
        for &b in &self.boundaries {
            if b <= prev {
                return Err(Error::AnnotationMismatch(format!("boundary {b} is not after {prev}")));
            }
            if b > song_measures {
                return Err(Error::AnnotationMismatch(format!("boundary {b} beyond song end {song_measures}")));
            }
            lengths.push(b - prev);
            prev = b;
        }
        if prev != song_measures {
            return Err(Error::AnnotationMismatch(format!("phrases end at {prev}, song has {song_measures} measures")));
        }
        let sections = match &self.sections {
            Some(s) => s.clone(),
            None => {
                let labels: Vec<&str> = self.letters.iter().map(String::as_str).collect();
                group_sections(&labels, &vec![SectionKind::Theme; labels.len()])
            }
        };
        if sections.iter().map(|s| s.1).sum::<usize>() != self.letters.len() {
            return Err(Error::AnnotationMismatch("sections do not cover every phrase".into()));
        }
        let mut phrases = self.letters.iter().cloned().zip(lengths);
        Ok(sections
            .iter()
            .map(|&(kind, n)| SectionLayout { kind, phrases: phrases.by_ref().take(n).collect() })
            .collect())
    }
}

/// Segments a song according to an annotation.
pub fn load_annotated_song(song: &Song, annotation: &PhraseAnnotation) -> Result<Song> {
    let layout = annotation.layout(song.measures())?;
    song.resegment(&layout)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    /// Song file, relative to the corpus directory.
    pub path: PathBuf,
    pub mode: Mode,
    pub phrases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub entries: Vec<IndexEntry>,
}

/// Partitions songs into (train, validation) by song id.
///
/// The train count is `round(n * ratio)`, kept within `1..n` when there are
/// at least two songs. The assignment depends only on `seed` and the set of ids.
pub fn split_dataset(index: &CorpusIndex, seed: u64, ratio: f64) -> (Vec<IndexEntry>, Vec<IndexEntry>) {
    assert!(ratio > 0.0 && ratio < 1.0, "split ratio must be in (0, 1)");
    let mut entries = index.entries.clone();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    let n = entries.len();
    let mut train = (n as f64 * ratio).round() as usize;
    if n >= 2 {
        train = train.clamp(1, n - 1);
    }
    let validation = entries.split_off(train.min(n));
    let tag = |mut e: IndexEntry, s| {
        e.split = Some(s);
        e
    };
    (
        entries.into_iter().map(|e| tag(e, Split::Train)).collect(),
        validation.into_iter().map(|e| tag(e, Split::Validation)).collect(),
    )
}

/// An on-disk corpus directory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub index: CorpusIndex,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let index = serde_json::from_slice(&fs::read(dir.join(INDEX_FILE))?)?;
        Ok(Corpus { dir, index })
    }

    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Corpus { dir, index: CorpusIndex::default() })
    }

    pub fn load_song(&self, entry: &IndexEntry) -> Result<Song> {
        read_song(self.dir.join(&entry.path))
    }

    pub fn songs(&self) -> Result<Vec<Song>> {
        self.index.entries.iter().map(|e| self.load_song(e)).collect()
    }

    /// Writes a song file and records it in the index (not yet saved).
    pub fn add_song(&mut self, song: &Song) -> Result<()> {
        let path = PathBuf::from(format!("{}.json", sanitize(&song.id)));
        write_song(self.dir.join(&path), song)?;
        self.index.entries.retain(|e| e.id != song.id);
        self.index.entries.push(IndexEntry {
            id: song.id.clone(),
            path,
            mode: song.mode,
            phrases: song.phrase_count(),
            split: None,
        });
        Ok(())
    }

    pub fn save_index(&self) -> Result<()> {
        fs::write(self.dir.join(INDEX_FILE), serde_json::to_vec_pretty(&self.index)?)?;
        Ok(())
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn read_song(path: impl AsRef<Path>) -> Result<Song> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_song(path: impl AsRef<Path>, song: &Song) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(song)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{ChordDegree, NoteEvent, Phrase, Pitch, Section};

    fn flat_song(measures: u32) -> Song {
        let melody = (0..measures).map(|m| NoteEvent::new(Pitch::new(1 + (m % 15) as u8).unwrap(), m * 16, 16)).collect();
        Song::new(
            "flat",
            0,
            Mode::Major,
            vec![Section {
                kind: SectionKind::Theme,
                phrases: vec![Phrase {
                    label: "A".into(),
                    measures,
                    melody,
                    chords: vec![ChordDegree { degree: 1, duration: measures * 16 }],
                    section_end: true,
                }],
            }],
        )
    }

    #[test]
    fn four_phrases_from_boundaries() {
        let ann = PhraseAnnotation { boundaries: vec![8, 16, 24, 32], letters: ["A", "A", "B", "B"].map(String::from).to_vec(), sections: None };
        let s = load_annotated_song(&flat_song(32), &ann).unwrap();
        assert_eq!(s.phrase_count(), 4);
        assert!(s.phrases().all(|p| p.measures == 8));
    }

    #[test]
    fn boundary_beyond_end() {
        let ann = PhraseAnnotation { boundaries: vec![8, 40], letters: vec!["A".into(), "B".into()], sections: None };
        assert!(matches!(load_annotated_song(&flat_song(32), &ann), Err(Error::AnnotationMismatch(_))));
    }

    #[test]
    fn pop_form_structure_string() {
        let ann = PhraseAnnotation::parse("i4A8A8B8B8B8x4A8B8o4").unwrap();
        assert_eq!(ann.boundaries.last(), Some(&68));
        let s = load_annotated_song(&flat_song(68), &ann).unwrap();
        let kinds: Vec<(SectionKind, usize)> = s.sections.iter().map(|s| (s.kind, s.phrases.len())).collect();
        assert_eq!(
            kinds,
            vec![
                (SectionKind::Intro, 1),
                (SectionKind::Theme, 5),
                (SectionKind::Bridge, 1),
                (SectionKind::Theme, 2),
                (SectionKind::Outro, 1)
            ]
        );
        let letters: String = s.sections[1].phrases.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(letters, "AABBB");
        assert!(PhraseAnnotation::parse("A8B").is_err());
    }

    fn index(n: usize) -> CorpusIndex {
        CorpusIndex {
            entries: (0..n)
                .map(|i| IndexEntry { id: format!("song{i:04}"), path: format!("song{i:04}.json").into(), mode: Mode::Major, phrases: 8, split: None })
                .collect(),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (t, v) = split_dataset(&index(10), 7, 0.9);
        assert_eq!((t.len(), v.len()), (9, 1));
        assert_eq!(split_dataset(&index(10), 7, 0.9), (t, v));
        let (t, v) = split_dataset(&index(528), 1, 0.9);
        assert!((475..=476).contains(&t.len()));
        assert_eq!(t.len() + v.len(), 528);
    }

    #[test]
    fn split_is_partition() {
        let idx = index(50);
        let (t, v) = split_dataset(&idx, 3, 0.8);
        let mut ids: Vec<&str> = t.iter().chain(v.iter()).map(|e| e.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 50);
        assert!(t.iter().all(|e| e.split == Some(Split::Train)));
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Corpus::create(dir.path()).unwrap();
        let song = flat_song(8);
        c.add_song(&song).unwrap();
        c.save_index().unwrap();
        let c2 = Corpus::open(dir.path()).unwrap();
        assert_eq!(c2.songs().unwrap(), vec![song]);
    }
}
