//! Generates pentatonic note sequences that follow the structure of a dance.
//!
//! Dance and music are both reduced to self-similarity matrices; the
//! generators pick notes whose similarity pattern correlates with the
//! dance's. Three generators are provided: a windowed beam search
//! ([`search`]), a threshold heuristic ([`baseline`]) and a small neural
//! network distilled from the beam search for real-time use ([`net`]).

pub mod baseline;
pub mod error;
pub mod eval;
pub mod music;
pub mod net;
pub mod pose;
pub mod search;
pub mod simcorr;
pub mod stream;

pub use error::{Error, Result};
pub use music::{GeneratorTag, NoteSequence};
pub use pose::{DanceSequence, PoseFrame};
pub use simcorr::SimMatrix;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
