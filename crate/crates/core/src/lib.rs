//! Procedural audio question answering: event synthesis, clip composition,
//! question generation with a symbolic answer oracle, log-mel features, a
//! small reverse-mode autodiff kernel and the FiLM / MALiMo models built on it.

pub mod answer;
pub mod ast;
pub mod audio;
pub mod clips;
pub mod error;
pub mod evalkit;
pub mod events;
pub mod features;
pub mod models;
pub mod nn;
pub mod oracle;
pub mod questions;
pub mod rng;

pub use answer::{Answer, AnswerVocab};
pub use error::{Error, Result};
pub use events::{EventInstance, EventLibrary, EventType, Taxonomy};
