//! Dataset handling: interchange schema, splitting, vocabulary, the
//! substitution lexicon with rule-based augmentation, and a synthetic
//! corpus generator for desk-scale runs.

mod dataset;
mod lexicon;
mod synth;
mod vocab;

use thiserror::Error;

pub use dataset::{load_dataset, save_dataset, split, Dataset, DatasetSplit, Demonstration};
pub use lexicon::{augment, Lexicon, LexiconEntry};
pub use synth::{
    candidate_structures, render_instruction, synth_corpus, synth_lexicon, synth_map, COLORS,
    OBJECTS, TEXTURES, WALLS,
};
pub use vocab::{build_vocab, tokenize_english, Vocab, BOS, EOS, PAD, SPECIALS, UNK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("map error: {0}")]
    Map(#[from] crate::worldmodel::MapError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("split ratios ({0}, {1}, {2}) must be non-negative and sum to 1")]
    BadRatios(f64, f64, f64),
}
