//! Substitution lexicon (attribute value -> surface words) and the
//! rule-based augmentation that rebinds one attribute at a time while
//! updating the paired instruction text.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::vocab::tokenize_english;
use crate::cas::{AttrValue, CasCommand, Direction, Side};
use crate::corpus::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    /// Attribute value in concrete CAS syntax ("Left", "3", "blue_floor").
    pub value: String,
    /// Substitution group; only values sharing a category swap for each other.
    pub category: String,
    /// Surface phrases, most canonical first.
    pub surface: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
}

impl Lexicon {
    pub fn entry_for(&self, value: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.value == value)
    }

    pub fn in_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a LexiconEntry> {
        self.entries.iter().filter(move |e| e.category == category)
    }

    pub fn load(reader: impl Read) -> Result<Lexicon, CorpusError> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serialization")
    }
}

/// Rebuild an attribute value of the same variant from concrete syntax.
fn value_like(proto: &AttrValue, raw: &str) -> Option<AttrValue> {
    match proto {
        AttrValue::Count(_) => raw.parse::<u8>().ok().filter(|n| (1..=9).contains(n)).map(AttrValue::Count),
        AttrValue::Direction(_) => Direction::ALL
            .into_iter()
            .find(|d| d.name() == raw)
            .map(AttrValue::Direction),
        AttrValue::Side(_) => Side::ALL
            .into_iter()
            .find(|s| s.name() == raw)
            .map(AttrValue::Side),
        AttrValue::Entity(_) => Some(AttrValue::Entity(raw.to_string())),
    }
}

/// Replace a token sub-sequence; None when `from` does not occur.
/// Replace every non-overlapping occurrence of `from`, so repeated mentions
/// of a value stay consistent. None when no occurrence exists.
fn replace_phrase(tokens: &[String], from: &[String], to: &[String]) -> Option<Vec<String>> {
    if from.is_empty() || tokens.len() < from.len() {
        return None;
    }
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    let mut hit = false;
    while i < tokens.len() {
        if i + from.len() <= tokens.len() && &tokens[i..i + from.len()] == from {
            out.extend_from_slice(to);
            i += from.len();
            hit = true;
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    hit.then_some(out)
}

/// For every bound attribute of every pair, emit one variant per alternative
/// lexicon value in the same category, substituting the surface phrase in
/// the instruction. Originals are kept; output is deduplicated; misses are
/// reported as warnings rather than errors.
pub fn augment(
    pairs: &[(CasCommand, String)],
    lexicon: &Lexicon,
) -> (Vec<(CasCommand, String)>, Vec<String>) {
    let mut out: Vec<(CasCommand, String)> = Vec::new();
    let mut seen: std::collections::BTreeSet<(String, String)> = std::collections::BTreeSet::new();
    let mut warnings = Vec::new();
    let mut push = |cmd: CasCommand, text: String, out: &mut Vec<(CasCommand, String)>| {
        if seen.insert((cmd.serialize(), text.clone())) {
            out.push((cmd, text));
        }
    };
    for (cmd, text) in pairs {
        push(cmd.clone(), text.clone(), &mut out);
        let tokens = tokenize_english(text);
        for (ai, action) in cmd.actions.iter().enumerate() {
            for slot in &action.attrs {
                let Some(value) = &slot.value else { continue };
                let rendered = value.render();
                let Some(entry) = lexicon.entry_for(&rendered) else {
                    warnings.push(format!(
                        "no lexicon entry for value '{rendered}'; attribute {} skipped",
                        slot.name
                    ));
                    continue;
                };
                let Some(phrase) = entry
                    .surface
                    .iter()
                    .map(|p| tokenize_english(p))
                    .find(|p| replace_phrase(&tokens, p, p).is_some())
                else {
                    warnings.push(format!(
                        "instruction '{text}' does not contain a surface form of '{rendered}'; attribute {} skipped",
                        slot.name
                    ));
                    continue;
                };
                for alt in lexicon.in_category(&entry.category) {
                    if alt.value == entry.value {
                        continue;
                    }
                    let Some(new_value) = value_like(value, &alt.value) else {
                        continue;
                    };
                    let alt_phrase = tokenize_english(&alt.surface[0]);
                    let Some(new_tokens) = replace_phrase(&tokens, &phrase, &alt_phrase) else {
                        continue;
                    };
                    let mut new_cmd = cmd.clone();
                    new_cmd.actions[ai].set(slot.name, new_value);
                    push(new_cmd, new_tokens.join(" "), &mut out);
                }
            }
        }
    }
    (out, warnings)
}
