//! Real-time session protocol: pose frames in, note events out.
//!
//! One [`Session`] per connection. Every inbound text frame is one JSON
//! message; [`Session::handle`] returns the replies and whether the
//! connection should close. The transport lives elsewhere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::music::PITCH_TABLE;
use crate::net::{ModelParams, OnlineGenerator, Sampling};
use crate::pose::{DanceSequence, PoseFrame};
use crate::simcorr::global_correlation;

/// Highest frame rate a client may announce.
pub const MAX_FPS: u32 = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Hello {
        fps: u32,
        k: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<String>,
    },
    Pose {
        seq: u64,
        pose: Vec<f64>,
    },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Ready {
        session_id: u64,
        k: usize,
        fps: u32,
        generator: String,
        model: String,
    },
    Note {
        index: usize,
        ordinal: u8,
        midi: u8,
        /// Zero-based index of the frame that completed the interval.
        at_frame: usize,
    },
    Summary {
        notes: Vec<u8>,
        correlation: f64,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Shared, read-only model served to every session.
#[derive(Debug, Clone)]
pub struct ServedModel {
    pub params: Arc<ModelParams>,
    pub sampling: Sampling,
    /// Free-form label echoed in `ready`.
    pub tag: String,
}

/// Per-connection state once the handshake is done.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: u64,
    pub k: usize,
    pub fps: u32,
    generator: OnlineGenerator,
    last_seq: Option<u64>,
    /// Every received frame, kept for the closing correlation.
    log: Vec<PoseFrame>,
    notes: Vec<u8>,
}

impl SessionState {
    pub fn generator(&self) -> &OnlineGenerator {
        &self.generator
    }

    pub fn frames_received(&self) -> usize {
        self.generator.frames_received()
    }

    pub fn notes_emitted(&self) -> usize {
        self.generator.notes_emitted()
    }
}

#[derive(Debug, Clone)]
enum Phase {
    AwaitHello,
    Ready(Box<SessionState>),
    Closed,
}

/// Replies to one inbound message.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub replies: Vec<ServerMessage>,
    pub close: bool,
}

impl Outcome {
    fn reply(msg: ServerMessage) -> Self {
        Outcome { replies: vec![msg], close: false }
    }

    fn silent() -> Self {
        Outcome { replies: Vec::new(), close: false }
    }

    fn closing(msg: ServerMessage) -> Self {
        Outcome { replies: vec![msg], close: true }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    id: u64,
    model: ServedModel,
    phase: Phase,
}

impl Session {
    pub fn new(id: u64, model: ServedModel) -> Self {
        Session { id, model, phase: Phase::AwaitHello }
    }

    pub fn state(&self) -> Option<&SessionState> {
        match &self.phase {
            Phase::Ready(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.phase, Phase::Closed)
    }

    fn fail(&mut self, message: impl Into<String>) -> Outcome {
        self.phase = Phase::Closed;
        Outcome::closing(ServerMessage::Error { message: message.into() })
    }

    /// Handles one raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Outcome {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.fail(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Outcome {
        match (&mut self.phase, msg) {
            (Phase::Closed, _) => self.fail("session already ended"),
            (Phase::AwaitHello, ClientMessage::Hello { fps, k, generator }) => {
                self.handle_hello(fps, k, generator)
            }
            (Phase::AwaitHello, _) => self.fail("expected hello as the first message"),
            (Phase::Ready(_), ClientMessage::Hello { .. }) => self.fail("duplicate hello"),
            (Phase::Ready(state), ClientMessage::Pose { seq, pose }) => {
                match handle_pose(state, &self.model, seq, &pose) {
                    Ok(Some(note)) => Outcome::reply(note),
                    Ok(None) => Outcome::silent(),
                    Err(message) => self.fail(message),
                }
            }
            (Phase::Ready(_), ClientMessage::End) => {
                let Phase::Ready(state) = std::mem::replace(&mut self.phase, Phase::Closed) else {
                    unreachable!("matched Ready above")
                };
                Outcome::closing(summary(&state))
            }
        }
    }

    fn handle_hello(&mut self, fps: u32, k: usize, generator: Option<String>) -> Outcome {
        if let Some(g) = generator.as_deref() {
            if g != "online" {
                return self.fail(format!(
                    "generator `{g}` cannot stream; only `online` is supported"
                ));
            }
        }
        if fps == 0 || fps > MAX_FPS {
            return self.fail(format!("unsupported fps {fps} (1..={MAX_FPS})"));
        }
        let model_k = self.model.params.config.k();
        if k != model_k {
            return self.fail(format!("unsupported k {k}; the model uses k = {model_k}"));
        }
        let generator = match OnlineGenerator::new(&self.model.params.config, self.model.sampling) {
            Ok(g) => g,
            Err(e) => return self.fail(e.to_string()),
        };
        self.phase = Phase::Ready(Box::new(SessionState {
            session_id: self.id,
            k,
            fps,
            generator,
            last_seq: None,
            log: Vec::new(),
            notes: Vec::new(),
        }));
        Outcome::reply(ServerMessage::Ready {
            session_id: self.id,
            k,
            fps,
            generator: "online".into(),
            model: self.model.tag.clone(),
        })
    }
}

fn handle_pose(
    state: &mut SessionState,
    model: &ServedModel,
    seq: u64,
    pose: &[f64],
) -> Result<Option<ServerMessage>, String> {
    if let Some(last) = state.last_seq {
        if seq <= last {
            return Err(format!("out-of-order seq {seq} after {last}"));
        }
        if seq != last + 1 {
            return Err(format!("missing frames: seq {seq} after {last}"));
        }
    }
    let frame = PoseFrame::from_slice(pose).map_err(|e| format!("malformed pose: {e}"))?;
    state.last_seq = Some(seq);
    state.log.push(frame);
    let note = state
        .generator
        .push_frame(&model.params, frame)
        .map_err(|e| format!("inference failed: {e}"))?;
    Ok(note.map(|ordinal| {
        state.notes.push(ordinal);
        ServerMessage::Note {
            index: state.notes.len() - 1,
            ordinal,
            midi: PITCH_TABLE[ordinal as usize],
            at_frame: state.generator.frames_received() - 1,
        }
    }))
}

fn summary(state: &SessionState) -> ServerMessage {
    let correlation = if state.notes.is_empty() {
        0.0
    } else {
        DanceSequence::new(state.log.clone(), state.fps, format!("session-{}", state.session_id))
            .and_then(|d| global_correlation(&d, &state.notes, state.k))
            .unwrap_or(0.0)
    };
    ServerMessage::Summary {
        notes: state.notes.clone(),
        correlation,
    }
}
