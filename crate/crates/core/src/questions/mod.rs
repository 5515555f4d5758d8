//! Template catalog, placeholder sampling, text realization, answer
//! balancing and per-split question generation.

mod balance;
mod catalog;
mod engine;
mod family;
mod text;
mod values;

pub use balance::BalanceState;
pub use catalog::{Bindings, Catalog, Placeholder, QuestionTemplate, Skill, Slot, MIN_PHRASING_WORDS};
pub use engine::{
    cross_check, read_questions, write_questions, Attempts, Draft, GenerationConfig, QuestionEngine,
    QuestionInstance, Rejection, ValidBindings,
};
pub use family::{AnchorBase, AnchorRef, AnchorStep, Family};
pub use text::{fill_phrasing, realize_text, tokenize, SynonymTable};
pub use values::{PlaceholderKind, Value, ORDINAL_WORDS};
