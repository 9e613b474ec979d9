//! The compound action specification language: five navigation actions with
//! typed attributes. A *structure* declares attributes without values; a
//! *command* has values bound. The concrete syntax `Action(attr=value; ...)`
//! is the interchange format used in corpus files.

mod parser;

pub use parser::{parse_cas, CasParseError};

use std::collections::BTreeSet;

use crate::worldmodel::{visible_entities, Pose, WorldMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Travel,
    Turn,
    Face,
    Verify,
    Find,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Travel,
        ActionKind::Turn,
        ActionKind::Face,
        ActionKind::Verify,
        ActionKind::Find,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Travel => "Travel",
            ActionKind::Turn => "Turn",
            ActionKind::Face => "Face",
            ActionKind::Verify => "Verify",
            ActionKind::Find => "Find",
        }
    }

    pub fn from_name(s: &str) -> Option<ActionKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Attribute slots legal for this action, in canonical order.
    pub fn grammar(self) -> &'static [(&'static str, AttrType)] {
        match self {
            ActionKind::Travel => &[
                ("distance", AttrType::Count),
                ("until", AttrType::Entity),
                ("past", AttrType::Entity),
            ],
            ActionKind::Turn => &[("direction", AttrType::Direction)],
            ActionKind::Face => &[("target", AttrType::Entity)],
            ActionKind::Verify => &[("see", AttrType::Entity), ("side", AttrType::Side)],
            ActionKind::Find => &[("object", AttrType::Entity)],
        }
    }

    pub fn attr_type(self, attr: &str) -> Option<AttrType> {
        self.grammar()
            .iter()
            .find(|(n, _)| *n == attr)
            .map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrType {
    /// Integer literal, 1..=9.
    Count,
    Entity,
    Direction,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Left,
    Right,
    Back,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Left, Direction::Right, Direction::Back];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "Left",
            Direction::Right => "Right",
            Direction::Back => "Back",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
    Ahead,
    At,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Ahead, Side::At];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Ahead => "ahead",
            Side::At => "at",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrValue {
    Count(u8),
    Entity(String),
    Direction(Direction),
    Side(Side),
}

impl AttrValue {
    pub fn render(&self) -> String {
        match self {
            AttrValue::Count(n) => n.to_string(),
            AttrValue::Entity(e) => e.clone(),
            AttrValue::Direction(d) => d.name().to_string(),
            AttrValue::Side(s) => s.name().to_string(),
        }
    }

    pub fn matches_type(&self, t: AttrType) -> bool {
        matches!(
            (self, t),
            (AttrValue::Count(_), AttrType::Count)
                | (AttrValue::Entity(_), AttrType::Entity)
                | (AttrValue::Direction(_), AttrType::Direction)
                | (AttrValue::Side(_), AttrType::Side)
        )
    }
}

/// One attribute slot: declared name plus optional bound value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrSlot {
    pub name: &'static str,
    pub value: Option<AttrValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CasAction {
    pub kind: ActionKind,
    /// Declared slots in canonical (grammar) order. Slots not declared are
    /// absent entirely; a declared slot with `None` is unset.
    pub attrs: Vec<AttrSlot>,
}

#[derive(Debug, thiserror::Error)]
pub enum CasError {
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("unknown attribute '{attr}' for action {action}")]
    UnknownAttribute { action: &'static str, attr: String },
    #[error("attribute '{attr}' declared twice on action {action}")]
    DuplicateAttribute { action: &'static str, attr: String },
    #[error("value {value} has wrong type for attribute '{attr}'")]
    TypeMismatch { attr: String, value: String },
}

impl CasAction {
    pub fn new(kind: ActionKind) -> Self {
        CasAction {
            kind,
            attrs: Vec::new(),
        }
    }

    /// Declare an unset attribute slot.
    pub fn declare(mut self, name: &str) -> Result<Self, CasError> {
        let canonical = self
            .kind
            .grammar()
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, _)| *n)
            .ok_or_else(|| CasError::UnknownAttribute {
                action: self.kind.name(),
                attr: name.to_string(),
            })?;
        if self.attrs.iter().any(|s| s.name == canonical) {
            return Err(CasError::DuplicateAttribute {
                action: self.kind.name(),
                attr: name.to_string(),
            });
        }
        self.attrs.push(AttrSlot {
            name: canonical,
            value: None,
        });
        let grammar = self.kind.grammar();
        self.attrs.sort_by_key(|s| {
            grammar
                .iter()
                .position(|(n, _)| *n == s.name)
                .expect("attribute checked against grammar")
        });
        Ok(self)
    }

    /// Declare and bind an attribute in one step.
    pub fn bind(self, name: &str, value: AttrValue) -> Result<Self, CasError> {
        let ty = self
            .kind
            .attr_type(name)
            .ok_or_else(|| CasError::UnknownAttribute {
                action: self.kind.name(),
                attr: name.to_string(),
            })?;
        if !value.matches_type(ty) {
            return Err(CasError::TypeMismatch {
                attr: name.to_string(),
                value: value.render(),
            });
        }
        let mut this = self.declare(name)?;
        let slot = this
            .attrs
            .iter_mut()
            .find(|s| s.name == name)
            .expect("just declared");
        slot.value = Some(value);
        Ok(this)
    }

    /// Set the value of an already-declared slot.
    pub fn set(&mut self, name: &str, value: AttrValue) {
        let slot = self
            .attrs
            .iter_mut()
            .find(|s| s.name == name)
            .expect("slot must be declared");
        slot.value = Some(value);
    }

    pub fn bound_count(&self) -> usize {
        self.attrs.iter().filter(|s| s.value.is_some()).count()
    }

    pub fn value(&self, name: &str) -> Option<&AttrValue> {
        self.attrs
            .iter()
            .find(|s| s.name == name)
            .and_then(|s| s.value.as_ref())
    }
}

/// A sequence of actions. With at least one bound attribute it is a command;
/// with all values unset it is a structure.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CasCommand {
    pub actions: Vec<CasAction>,
}

/// A command with every attribute value unset.
pub type CasStructure = CasCommand;

impl CasCommand {
    pub fn new(actions: Vec<CasAction>) -> Self {
        CasCommand { actions }
    }

    pub fn is_structure(&self) -> bool {
        self.eta() == 0
    }

    /// Same shape with every attribute value cleared.
    pub fn structure_of(&self) -> CasStructure {
        CasCommand {
            actions: self
                .actions
                .iter()
                .map(|a| CasAction {
                    kind: a.kind,
                    attrs: a
                        .attrs
                        .iter()
                        .map(|s| AttrSlot {
                            name: s.name,
                            value: None,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Number of bound attribute values across all actions.
    pub fn eta(&self) -> usize {
        self.actions.iter().map(|a| a.bound_count()).sum()
    }

    /// Number of declared attribute slots across all actions.
    pub fn declared_count(&self) -> usize {
        self.actions.iter().map(|a| a.attrs.len()).sum()
    }

    /// Canonical concrete syntax.
    pub fn serialize(&self) -> String {
        self.actions
            .iter()
            .map(|a| {
                let attrs = a
                    .attrs
                    .iter()
                    .map(|s| match &s.value {
                        Some(v) => format!("{}={}", s.name, v.render()),
                        None => format!("{}=None", s.name),
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("{}({})", a.kind.name(), attrs)
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl std::fmt::Display for CasCommand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Token sequence over the neural vocabulary: one token per action, then one
/// `attribute.value` token per bound attribute in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CasTokenSeq {
    pub tokens: Vec<String>,
}

pub fn tokenize_cas(cmd: &CasCommand) -> CasTokenSeq {
    let mut tokens = Vec::new();
    for a in &cmd.actions {
        tokens.push(a.kind.name().to_string());
        for s in &a.attrs {
            if let Some(v) = &s.value {
                tokens.push(format!("{}.{}", s.name, v.render()));
            }
        }
    }
    CasTokenSeq { tokens }
}

/// Free-function alias for the bound attribute count.
pub fn eta(cmd: &CasCommand) -> usize {
    cmd.eta()
}

fn levenshtein(a: &[String], b: &[String]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Normalized token-level edit distance in [0, 1].
pub fn token_distance(a: &CasCommand, b: &CasCommand) -> f64 {
    let ta = tokenize_cas(a).tokens;
    let tb = tokenize_cas(b).tokens;
    let denom = ta.len().max(tb.len());
    if denom == 0 {
        return 0.0;
    }
    levenshtein(&ta, &tb) as f64 / denom as f64
}

/// Candidate values for one attribute type, restricted to what is visible.
pub fn attribute_domain(ty: AttrType, visible: &BTreeSet<String>) -> Vec<AttrValue> {
    match ty {
        AttrType::Count => (1..=9).map(AttrValue::Count).collect(),
        AttrType::Direction => Direction::ALL
            .into_iter()
            .map(AttrValue::Direction)
            .collect(),
        AttrType::Side => Side::ALL.into_iter().map(AttrValue::Side).collect(),
        AttrType::Entity => visible
            .iter()
            .map(|e| AttrValue::Entity(e.clone()))
            .collect(),
    }
}

/// All full instantiations of a structure's unset attributes, restricted to
/// entities visible from `pose`. Deterministic order: attributes vary
/// right-to-left, value domains in their declared order.
pub fn enumerate_attribute_values(
    structure: &CasStructure,
    map: &WorldMap,
    pose: Pose,
) -> Vec<CasCommand> {
    let visible: BTreeSet<String> = visible_entities(map, pose)
        .into_iter()
        .map(|(e, _)| e.label())
        .collect();
    // Collect unset slots as (action index, slot name, domain).
    let mut slots: Vec<(usize, &'static str, Vec<AttrValue>)> = Vec::new();
    for (ai, action) in structure.actions.iter().enumerate() {
        for s in &action.attrs {
            if s.value.is_none() {
                let ty = action.kind.attr_type(s.name).expect("declared slot");
                slots.push((ai, s.name, attribute_domain(ty, &visible)));
            }
        }
    }
    if slots.iter().any(|(_, _, d)| d.is_empty()) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut indices = vec![0usize; slots.len()];
    loop {
        let mut cmd = structure.clone();
        for (slot, &i) in slots.iter().zip(indices.iter()) {
            cmd.actions[slot.0].set(slot.1, slot.2[i].clone());
        }
        out.push(cmd);
        // odometer increment, last slot fastest
        let mut pos = slots.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < slots[pos].2.len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}
