//! English tokenization and vocabulary construction.

use std::collections::HashMap;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercase, split on whitespace and punctuation, punctuation dropped.
pub fn tokenize_english(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.words[i].clone()).collect()
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }
}

/// Frequency-sorted vocabulary (ties broken alphabetically) over token
/// sequences, with types below min_count dropped to UNK. Specials occupy
/// the first four ids.
pub fn build_vocab(sentences: &[Vec<String>], min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut types: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count.max(1) && !SPECIALS.contains(w))
        .collect();
    types.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    words.extend(types.into_iter().map(|(w, _)| w.to_string()));
    Vocab::from_words(words)
}
