use dance2music::music::{write_midi, NoteSequence};
use dance2music::GeneratorTag;
use midly::{Format, MetaMessage, MidiMessage, Smf, Timing, TrackEventKind};

const GOLDEN: &[u8] = include_bytes!("data/golden_204.mid");

fn sequence() -> NoteSequence {
    NoteSequence::new(vec![2, 0, 4], 6, 30, GeneratorTag::Offline).unwrap()
}

#[test]
fn matches_frozen_bytes() {
    assert_eq!(sequence().to_midi_bytes().unwrap(), GOLDEN);
}

#[test]
fn written_file_matches_frozen_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.mid");
    let n = write_midi(&sequence(), &path).unwrap();
    assert_eq!(n, GOLDEN.len());
    assert_eq!(std::fs::read(&path).unwrap(), GOLDEN);
}

#[test]
fn golden_file_parses_as_expected() {
    let smf = Smf::parse(GOLDEN).unwrap();
    assert_eq!(smf.header.format, Format::SingleTrack);
    assert_eq!(smf.header.timing, Timing::Metrical(480.into()));
    assert_eq!(smf.tracks.len(), 1);

    let mut tick = 0u32;
    let mut tempo = None;
    let mut program = None;
    let mut ons = Vec::new();
    let mut offs = Vec::new();
    let mut ended = false;
    for ev in &smf.tracks[0] {
        tick += ev.delta.as_int();
        match ev.kind {
            TrackEventKind::Meta(MetaMessage::Tempo(t)) => tempo = Some(t.as_int()),
            TrackEventKind::Meta(MetaMessage::EndOfTrack) => ended = true,
            TrackEventKind::Midi { channel, message } => {
                assert_eq!(channel.as_int(), 0);
                match message {
                    MidiMessage::ProgramChange { program: p } => program = Some(p.as_int()),
                    MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => {
                        assert_eq!(vel.as_int(), 90);
                        ons.push((tick, key.as_int()));
                    }
                    MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => {
                        offs.push((tick, key.as_int()))
                    }
                    other => panic!("unexpected message {other:?}"),
                }
            }
            _ => {}
        }
    }
    assert!(ended);
    assert_eq!(tempo, Some(500_000));
    assert_eq!(program, Some(0));
    // 0.2 s per note at 120 BPM and 480 ticks per quarter is 192 ticks
    assert_eq!(ons, vec![(0, 64), (192, 60), (384, 69)]);
    assert_eq!(offs, vec![(192, 64), (384, 60), (576, 69)]);
}
