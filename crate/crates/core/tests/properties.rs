use mf_core::analysis::{extract_basic_melody, extract_basic_rhythm_form, rhythm_labels};
use mf_core::corpus::{split_dataset, CorpusIndex, IndexEntry};
use mf_core::features::{phrase_sequence, Task};
use mf_core::midi::quantize;
use mf_core::rhythm::{legato_durations, measure_complexity, patterns_to_onsets, phrase_patterns, rhythm_similarity, RhythmPatternCode};
use mf_core::score::{transpose_to_c, ChordDegree, Mode, NoteEvent, Phrase, Pitch, RawNote, RawSong, SectionKind};
use proptest::prelude::*;

fn phrase_strategy() -> impl Strategy<Value = Phrase> {
    (1u32..=4, prop::collection::vec((0u32..3, 1u32..6, 0u8..=15), 1..40)).prop_map(|(measures, steps)| {
        let end = measures * 16;
        let mut t = 0;
        let mut melody = Vec::new();
        for (gap, dur, pitch) in steps {
            t += gap;
            if t >= end {
                break;
            }
            let d = dur.min(end - t);
            melody.push(NoteEvent::new(Pitch::new(pitch).unwrap(), t, d));
            t += d;
        }
        Phrase { label: "A".into(), measures, melody, chords: vec![ChordDegree { degree: 4, duration: end }], section_end: false }
    })
}

proptest! {
    #[test]
    fn codec_round_trips(onsets in prop::collection::btree_set(0u8..8, 0..=8)) {
        let v: Vec<u8> = onsets.into_iter().collect();
        let code = RhythmPatternCode::encode(&v).unwrap();
        prop_assert_eq!(code.decode(), v.clone());
        prop_assert_eq!(code.onset_count() as usize, v.len());
    }

    #[test]
    fn codec_rejects_outside_window(k in 8u8..=255) {
        prop_assert!(RhythmPatternCode::encode(&[k]).is_err());
    }

    #[test]
    fn patterns_preserve_onsets(p in phrase_strategy()) {
        let codes = phrase_patterns(&p.melody, p.measures);
        prop_assert_eq!(codes.len(), 2 * p.measures as usize);
        prop_assert_eq!(patterns_to_onsets(&codes), p.onsets());
    }

    #[test]
    fn legato_durations_fill_phrase(p in phrase_strategy()) {
        let onsets = p.onsets();
        let d = legato_durations(&onsets, p.len_sixteenths());
        if let Some(&first) = onsets.first() {
            prop_assert_eq!(d.iter().sum::<u32>(), p.len_sixteenths() - first);
        }
        prop_assert!(d.iter().all(|&x| x > 0));
    }

    #[test]
    fn framework_shape_laws(p in phrase_strategy()) {
        prop_assert_eq!(extract_basic_melody(&p).len(), 2 * p.measures as usize);
        let form = extract_basic_rhythm_form(&p);
        prop_assert_eq!(form.len(), p.measures as usize);
        for (i, d) in form.iter().enumerate() {
            prop_assert!(d.similar_to as usize <= i);
            prop_assert_eq!(form[d.similar_to as usize].similar_to, d.similar_to);
        }
        prop_assert_eq!(rhythm_labels(&form)[0], 'a');
    }

    #[test]
    fn row_count_laws(p in phrase_strategy()) {
        prop_assert_eq!(phrase_sequence(Task::BasicMelody, &p, SectionKind::Theme).len(), 2 * p.measures as usize);
        prop_assert_eq!(phrase_sequence(Task::Rhythm, &p, SectionKind::Theme).len(), 2 * p.measures as usize);
        prop_assert_eq!(phrase_sequence(Task::Melody, &p, SectionKind::Theme).len(), p.onsets().len());
    }

    #[test]
    fn complexity_counts_onsets(mask in 0u16..=u16::MAX) {
        let notes: Vec<NoteEvent> = (0..16).filter(|k| mask >> k & 1 == 1).map(|k| NoteEvent::new(Pitch::new(3).unwrap(), k, 1)).collect();
        prop_assert_eq!(measure_complexity(&notes).value(), mask.count_ones() as f64 / 16.0);
    }

    #[test]
    fn rhythm_similarity_symmetric(a: u16, b: u16) {
        prop_assert_eq!(rhythm_similarity(a, b), rhythm_similarity(b, a));
        prop_assert_eq!(rhythm_similarity(a, a), 1.0);
    }

    #[test]
    fn quantization_error_is_bounded(tick in 0u64..1_000_000, tps in 1u32..960) {
        let q = quantize(tick, tps as f64);
        prop_assert!((q as f64 * tps as f64 - tick as f64).abs() <= tps as f64 / 2.0 + 1e-9);
    }

    #[test]
    fn split_is_a_partition(n in 2usize..40, seed: u64, ratio in 0.05f64..0.95) {
        let index = CorpusIndex {
            entries: (0..n).map(|i| IndexEntry { id: format!("s{i:03}"), path: format!("s{i:03}.json").into(), mode: Mode::Major, phrases: 1, split: None }).collect(),
        };
        let (train, val) = split_dataset(&index, seed, ratio);
        prop_assert_eq!(train.len() + val.len(), n);
        prop_assert!(!train.is_empty() && !val.is_empty());
        let mut ids: Vec<_> = train.iter().chain(&val).map(|e| e.id.clone()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        let (train2, _) = split_dataset(&index, seed, ratio);
        prop_assert_eq!(train, train2);
    }

    #[test]
    fn transposition_lands_in_range(tonic in 0u8..12, keys in prop::collection::vec(40u8..90, 1..20)) {
        let notes = keys.iter().enumerate().map(|(i, &k)| RawNote { key: k, onset: 4 * i as u32, duration: 4 }).collect();
        let raw = RawSong { id: "p".into(), tonic, mode: Mode::Major, pickup: 0, length: None, notes, chords: vec![] };
        let song = transpose_to_c(&raw).unwrap();
        for n in song.phrases().flat_map(|p| p.melody.iter()) {
            prop_assert!((1..=15).contains(&n.pitch.value()));
        }
        prop_assert_eq!(transpose_to_c(&song.to_raw()).unwrap().sections, song.sections);
    }
}
