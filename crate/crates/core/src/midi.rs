//! Standard MIDI file input (quantized to sixteenths) and block-triad export.

use std::collections::BTreeMap;

use log::warn;
use midly::num::{u15, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{ChordQuality, Mode, RawChord, RawNote, RawSong, Song};

/// How a track is picked out of a MIDI file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackSelector {
    /// First track whose name contains this text, ignoring case.
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRoles {
    pub melody: TrackSelector,
    pub chords: TrackSelector,
}

impl Default for TrackRoles {
    fn default() -> Self {
        TrackRoles { melody: TrackSelector::Name("melody".into()), chords: TrackSelector::Name("chord".into()) }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedMidi {
    pub song: RawSong,
    pub warnings: Vec<String>,
}

/// A note in ticks before quantization.
#[derive(Debug, Clone, Copy)]
struct TickNote {
    key: u8,
    start: u64,
    end: u64,
}

/// Rounds a tick position to the nearest sixteenth (halves round up).
pub fn quantize(tick: u64, ticks_per_sixteenth: f64) -> u32 {
    (tick as f64 / ticks_per_sixteenth).round() as u32
}

/// Reads a MIDI file into a quantized chromatic song.
pub fn parse_midi(id: &str, bytes: &[u8], roles: &TrackRoles) -> Result<ParsedMidi> {
    let smf = Smf::parse(bytes).map_err(|e| Error::MalformedMidi(e.to_string()))?;
    let tpq = match smf.header.timing {
        Timing::Metrical(t) if t.as_int() > 0 => t.as_int() as f64,
        Timing::Metrical(_) => return Err(Error::MalformedMidi("zero ticks per beat".into())),
        Timing::Timecode(..) => return Err(Error::MalformedMidi("timecode timing is not supported".into())),
    };
    let per_sixteenth = tpq / 4.0;
    let mut warnings = Vec::new();

    let names: Vec<String> = smf
        .tracks
        .iter()
        .map(|t| {
            t.iter()
                .find_map(|e| match e.kind {
                    TrackEventKind::Meta(MetaMessage::TrackName(n)) => Some(String::from_utf8_lossy(n).into_owned()),
                    _ => None,
                })
                .unwrap_or_default()
        })
        .collect();
    let find = |sel: &TrackSelector| match sel {
        TrackSelector::Index(i) => (*i < smf.tracks.len()).then_some(*i),
        TrackSelector::Name(n) => {
            let n = n.to_lowercase();
            names.iter().position(|t| t.to_lowercase().contains(&n))
        }
    };

    let mut tonic = 0u8;
    let mut mode = Mode::Major;
    let mut key_found = false;
    for track in &smf.tracks {
        for e in track {
            if let TrackEventKind::Meta(MetaMessage::KeySignature(sharps, minor)) = e.kind {
                if !key_found {
                    let major_tonic = (sharps as i32 * 7).rem_euclid(12) as u8;
                    tonic = if minor { (major_tonic + 9) % 12 } else { major_tonic };
                    mode = if minor { Mode::Minor } else { Mode::Major };
                    key_found = true;
                }
            }
        }
    }
    if !key_found {
        warnings.push("no key signature, assuming C major".into());
    }

    let melody_idx = find(&roles.melody).or_else(|| (smf.tracks.len() == 1).then_some(0));
    let melody_notes = melody_idx.map(|i| track_notes(&smf.tracks[i])).unwrap_or_default();
    if melody_notes.is_empty() {
        return Err(Error::EmptyMelodyTrack);
    }

    let mut notes = Vec::with_capacity(melody_notes.len());
    for n in &melody_notes {
        let onset = quantize(n.start, per_sixteenth);
        let end = quantize(n.end, per_sixteenth);
        if end <= onset {
            let msg = format!("dropped zero-length note {} at tick {}", n.key, n.start);
            warn!("{id}: {msg}");
            warnings.push(msg);
            continue;
        }
        notes.push(RawNote { key: n.key, onset, duration: end - onset });
    }
    if notes.is_empty() {
        return Err(Error::EmptyMelodyTrack);
    }

    let chords = match find(&roles.chords).filter(|&i| Some(i) != melody_idx) {
        Some(i) => chords_from_notes(&track_notes(&smf.tracks[i]), per_sixteenth),
        None => {
            warnings.push("no chord track found".into());
            Vec::new()
        }
    };

    let end_tick = smf
        .tracks
        .iter()
        .map(|t| t.iter().map(|e| e.delta.as_int() as u64).sum::<u64>())
        .max()
        .unwrap_or(0);
    let length = Some(quantize(end_tick, per_sixteenth));

    Ok(ParsedMidi { song: RawSong { id: id.to_string(), tonic, mode, pickup: 0, length, notes, chords }, warnings })
}

fn track_notes(track: &[TrackEvent]) -> Vec<TickNote> {
    let mut open: BTreeMap<(u8, u8), u64> = BTreeMap::new();
    let mut out = Vec::new();
    let mut tick = 0u64;
    for e in track {
        tick += e.delta.as_int() as u64;
        if let TrackEventKind::Midi { channel, message } = e.kind {
            let (key, on) = match message {
                MidiMessage::NoteOn { key, vel } => (key.as_int(), vel.as_int() > 0),
                MidiMessage::NoteOff { key, .. } => (key.as_int(), false),
                _ => continue,
            };
            let slot = (channel.as_int(), key);
            if let Some(start) = open.remove(&slot) {
                out.push(TickNote { key, start, end: tick });
            }
            if on {
                open.insert(slot, tick);
            }
        }
    }
    out.sort_by_key(|n| (n.start, n.key));
    out
}

/// Groups chord-track notes by quantized onset and names each group.
fn chords_from_notes(notes: &[TickNote], per_sixteenth: f64) -> Vec<RawChord> {
    let mut groups: BTreeMap<u32, (u32, Vec<u8>)> = BTreeMap::new();
    for n in notes {
        let onset = quantize(n.start, per_sixteenth);
        let end = quantize(n.end, per_sixteenth);
        if end <= onset {
            continue;
        }
        let g = groups.entry(onset).or_insert((end, Vec::new()));
        g.0 = g.0.max(end);
        g.1.push(n.key);
    }
    let onsets: Vec<u32> = groups.keys().copied().collect();
    groups
        .iter()
        .enumerate()
        .filter_map(|(i, (&onset, (end, keys)))| {
            let (root, quality) = identify_chord(keys)?;
            let end = onsets.get(i + 1).map_or(*end, |&next| next.min(*end).max(onset + 1));
            Some(RawChord { root, quality, onset, duration: end - onset })
        })
        .collect()
}

/// Best-matching (root pitch class, quality) for a set of MIDI keys.
///
/// Scores each candidate by chord tones present minus sounding tones outside
/// the chord; ties prefer the bass note as root, then simpler chords.
pub fn identify_chord(keys: &[u8]) -> Option<(u8, ChordQuality)> {
    let bass = *keys.iter().min()?;
    let mut pcs = [false; 12];
    for k in keys {
        pcs[(k % 12) as usize] = true;
    }
    let mut best: Option<((i32, bool, i32), u8, ChordQuality)> = None;
    for root in 0..12u8 {
        if !pcs[root as usize] {
            continue;
        }
        for (qi, q) in ChordQuality::ALL.iter().enumerate() {
            let tones: Vec<usize> = q.intervals().iter().map(|i| ((root + i) % 12) as usize).collect();
            let hits = tones.iter().filter(|&&t| pcs[t]).count() as i32;
            let extra = (0..12).filter(|t| pcs[*t] && !tones.contains(t)).count() as i32;
            let key = (hits - extra - (tones.len() as i32 - hits), root == bass % 12, -(qi as i32));
            if best.as_ref().is_none_or(|b| key > b.0) {
                best = Some((key, root, *q));
            }
        }
    }
    best.map(|(_, r, q)| (r, q))
}

const EXPORT_TPQ: u16 = 480;

/// Writes a song as a format-1 MIDI file: a melody track and a chord track of
/// root-position block triads, both on piano.
pub fn export_midi(song: &Song) -> Vec<u8> {
    let per_sixteenth = (EXPORT_TPQ / 4) as u64;
    let (melody, chords) = song.flatten();

    let mut conductor = vec![
        meta(0, MetaMessage::TrackName(b"Conductor")),
        meta(0, MetaMessage::Tempo(500_000.into())),
        meta(0, MetaMessage::TimeSignature(4, 2, 24, 8)),
        meta(0, MetaMessage::KeySignature(0, false)),
    ];
    conductor.push(meta(0, MetaMessage::EndOfTrack));

    let melody_events: Vec<(u64, bool, u8)> = melody
        .iter()
        .filter_map(|n| n.pitch.to_midi().map(|k| (n, k)))
        .flat_map(|(n, k)| [(n.onset as u64 * per_sixteenth, true, k), (n.end() as u64 * per_sixteenth, false, k)])
        .collect();
    let mut t = 0u64;
    let chord_events: Vec<(u64, bool, u8)> = chords
        .iter()
        .flat_map(|c| {
            let (start, end) = (t * per_sixteenth, (t + c.duration as u64) * per_sixteenth);
            t += c.duration as u64;
            c.triad().into_iter().filter_map(|p| p.to_midi()).flat_map(move |k| [(start, true, k), (end, false, k)]).collect::<Vec<_>>()
        })
        .collect();

    let smf = Smf {
        header: Header::new(Format::Parallel, Timing::Metrical(u15::new(EXPORT_TPQ))),
        tracks: vec![conductor, note_track(b"Melody", 0, melody_events), note_track(b"Chords", 1, chord_events)],
    };
    let mut out = Vec::new();
    smf.write_std(&mut out).expect("writing to a Vec cannot fail");
    out
}

fn meta(delta: u32, m: MetaMessage<'static>) -> TrackEvent<'static> {
    TrackEvent { delta: u28::new(delta), kind: TrackEventKind::Meta(m) }
}

fn note_track(name: &'static [u8], channel: u8, mut events: Vec<(u64, bool, u8)>) -> Vec<TrackEvent<'static>> {
    // Note-offs sort before note-ons at the same tick.
    events.sort_by_key(|&(t, on, k)| (t, on, k));
    let channel = u4::new(channel);
    let mut track = vec![
        meta(0, MetaMessage::TrackName(name)),
        TrackEvent { delta: u28::new(0), kind: TrackEventKind::Midi { channel, message: MidiMessage::ProgramChange { program: u7::new(0) } } },
    ];
    let mut last = 0u64;
    for (t, on, k) in events {
        let message = if on {
            MidiMessage::NoteOn { key: u7::new(k), vel: u7::new(80) }
        } else {
            MidiMessage::NoteOff { key: u7::new(k), vel: u7::new(0) }
        };
        track.push(TrackEvent { delta: u28::new((t - last) as u32), kind: TrackEventKind::Midi { channel, message } });
        last = t;
    }
    track.push(meta(0, MetaMessage::EndOfTrack));
    track
}
