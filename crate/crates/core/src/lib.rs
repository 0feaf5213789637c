//! Contextual data augmentation for grammatical error correction.
//!
//! The pipeline extracts error patterns from annotated parallel corpora
//! ([`align`], [`pattern`]), asks a pluggable generator for fresh contexts
//! containing the correct side of sampled patterns ([`genbackend`]), plants
//! the wrong side back in to get synthetic pairs ([`synth`]), relabels them
//! with a corrector ([`denoise`]), mixes them with real data ([`mix`]) and
//! measures the result ([`eval`]).

pub mod align;
pub mod corpus;
pub mod denoise;
pub mod eval;
pub mod exec;
pub mod genbackend;
pub mod http;
pub mod mix;
pub mod pattern;
pub mod synth;

pub use align::{apply_edits, extract_edits, Edit, EditType, Span};
pub use corpus::{AnnotatedExample, ParallelExample, Tokens};
pub use pattern::{ErrorPattern, PatternPool};
pub use denoise::{relabel, Corrector};
pub use eval::{f_beta, score, ScoreReport};
pub use genbackend::{GenerationRequest, GenerationResult, Generator, StubGenerator};
pub use synth::{synthesize, SynthConfig, SyntheticSample};
