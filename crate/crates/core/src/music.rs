//! Note sequences and their emission as note JSON and Standard MIDI Files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Size of the note vocabulary (C major pentatonic).
pub const NUM_NOTES: usize = 5;
/// MIDI pitches of C4, D4, E4, G4, A4 (C4 = 60).
pub const PITCH_TABLE: [u8; NUM_NOTES] = [60, 62, 64, 67, 69];
/// Ordinal of E4, the note every generator starts with.
pub const FIRST_NOTE: u8 = 2;

pub const TICKS_PER_QUARTER: u16 = 480;
pub const TEMPO_US_PER_QUARTER: u32 = 500_000;
pub const VELOCITY: u8 = 90;

pub(crate) fn check_ordinal(o: u8) -> Result<u8> {
    if (o as usize) < NUM_NOTES {
        Ok(o)
    } else {
        Err(invalid(format!("note ordinal {o} outside 0..{NUM_NOTES}")))
    }
}

pub fn ordinal_to_midi(o: u8) -> Result<u8> {
    Ok(PITCH_TABLE[check_ordinal(o)? as usize])
}

/// Which generator produced a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorTag {
    Offline,
    Baseline,
    Online,
}

impl GeneratorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorTag::Offline => "offline",
            GeneratorTag::Baseline => "baseline",
            GeneratorTag::Online => "online",
        }
    }
}

impl std::fmt::Display for GeneratorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub index: usize,
    pub ordinal: u8,
    pub midi_pitch: u8,
    pub onset_s: f64,
    pub duration_s: f64,
}

/// Ordinal notes played every `k` frames of a `fps` dance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSequence {
    pub k: u32,
    pub fps: u32,
    #[serde(rename = "generator")]
    pub generator_tag: GeneratorTag,
    pub notes: Vec<u8>,
}

impl NoteSequence {
    pub fn new(notes: Vec<u8>, k: u32, fps: u32, generator_tag: GeneratorTag) -> Result<Self> {
        let seq = NoteSequence { k, fps, generator_tag, notes };
        seq.validate()?;
        Ok(seq)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.fps == 0 {
            return Err(invalid("k and fps must be positive"));
        }
        for &n in &self.notes {
            check_ordinal(n)?;
        }
        Ok(())
    }

    pub fn note_duration_s(&self) -> f64 {
        self.k as f64 / self.fps as f64
    }

    pub fn events(&self) -> Vec<NoteEvent> {
        let dur = self.note_duration_s();
        self.notes
            .iter()
            .enumerate()
            .map(|(index, &ordinal)| NoteEvent {
                index,
                ordinal,
                midi_pitch: PITCH_TABLE[ordinal as usize],
                onset_s: index as f64 * dur,
                duration_s: dur,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let seq: NoteSequence =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        seq.validate()?;
        Ok(seq)
    }

    /// Tick at which note `index` starts: `index·k/fps` seconds, rounded half up.
    fn boundary_tick(&self, index: usize) -> u64 {
        // ticks per second = 480 / 0.5 s
        let ticks_per_s =
            TICKS_PER_QUARTER as u64 * 1_000_000 / TEMPO_US_PER_QUARTER as u64;
        let num = index as u64 * self.k as u64 * ticks_per_s;
        let den = self.fps as u64;
        (2 * num + den) / (2 * den)
    }

    /// Encodes the sequence as a format-0 Standard MIDI File.
    pub fn to_midi_bytes(&self) -> Result<Vec<u8>> {
        if self.notes.is_empty() {
            return Err(invalid("cannot write an empty note sequence"));
        }
        let mut track = Vec::new();
        // tempo
        write_vlq(&mut track, 0);
        track.extend_from_slice(&[0xFF, 0x51, 0x03]);
        track.extend_from_slice(&TEMPO_US_PER_QUARTER.to_be_bytes()[1..]);
        // program 0 (acoustic grand piano) on channel 0
        write_vlq(&mut track, 0);
        track.extend_from_slice(&[0xC0, 0x00]);

        let mut now = 0u64;
        for (i, &o) in self.notes.iter().enumerate() {
            let pitch = ordinal_to_midi(o)?;
            let (on, off) = (self.boundary_tick(i), self.boundary_tick(i + 1));
            write_vlq(&mut track, (on - now) as u32);
            track.extend_from_slice(&[0x90, pitch, VELOCITY]);
            write_vlq(&mut track, (off - on) as u32);
            track.extend_from_slice(&[0x80, pitch, 0x00]);
            now = off;
        }
        write_vlq(&mut track, 0);
        track.extend_from_slice(&[0xFF, 0x2F, 0x00]);

        let mut out = Vec::with_capacity(22 + track.len());
        out.extend_from_slice(b"MThd");
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&0u16.to_be_bytes());
        out.extend_from_slice(&1u16.to_be_bytes());
        out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(track.len() as u32).to_be_bytes());
        out.extend_from_slice(&track);
        Ok(out)
    }
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7F) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Writes `seq` as a MIDI file and returns the number of bytes written.
pub fn write_midi(seq: &NoteSequence, path: impl AsRef<Path>) -> Result<usize> {
    let bytes = seq.to_midi_bytes()?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn write_notes_json(seq: &NoteSequence, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, seq.to_json()?)?;
    Ok(())
}

pub fn read_notes_json(path: impl AsRef<Path>) -> Result<NoteSequence> {
    NoteSequence::from_json(&fs::read_to_string(path)?)
}
