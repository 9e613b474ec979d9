//! Sentence planning: bind attribute values to candidate command structures
//! so the resulting commands are valid for the path and unambiguous among
//! the alternative paths a follower could take from the same start pose.

use std::collections::BTreeSet;

use crate::cas::{attribute_domain, AttrValue, CasCommand, CasStructure, Direction, Side};
use crate::worldmodel::{
    local_entities, visible_entities, Entity, Move, Path, Pose, Relation, SegmentKind, WorldMap,
};

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    /// Minimum likelihood for a command to count as valid.
    pub p_threshold: f64,
    /// Upper bound on the move count of enumerated alternative paths.
    /// Alternatives share the query path's start pose and move count; when
    /// the horizon is smaller than the query path, enumeration is truncated
    /// and the result flagged approximate. `None` means |p| moves + 2.
    pub horizon: Option<usize>,
    /// Cap on the number of enumerated alternatives.
    pub max_alt_paths: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            p_threshold: 0.99,
            horizon: None,
            max_alt_paths: 200_000,
        }
    }
}

impl PlannerConfig {
    fn horizon_for(&self, path: &Path) -> usize {
        self.horizon.unwrap_or(path.move_count() + 2)
    }
}

/// Net rotation of the first maximal turn run in the path.
fn first_turn_direction(path: &Path) -> Option<Direction> {
    let mut net: i32 = 0;
    let mut seen_turn = false;
    for m in path.moves() {
        match m {
            Move::TurnLeft => {
                net += 1;
                seen_turn = true;
            }
            Move::TurnRight => {
                net -= 1;
                seen_turn = true;
            }
            Move::Forward => {
                if seen_turn {
                    break;
                }
            }
        }
    }
    if !seen_turn {
        return None;
    }
    match net.rem_euclid(4) {
        1 => Some(Direction::Left),
        3 => Some(Direction::Right),
        2 => Some(Direction::Back),
        _ => None,
    }
}

fn forward_moves(path: &Path) -> usize {
    path.moves().iter().filter(|m| **m == Move::Forward).count()
}

fn entity_label_at(map: &WorldMap, node: crate::worldmodel::GridPos, label: &str) -> bool {
    local_entities(map, node).iter().any(|e| e.label() == label)
}

fn visible_with(map: &WorldMap, pose: Pose, label: &str, side: Option<Side>) -> bool {
    visible_entities(map, pose).iter().any(|(e, rel)| {
        e.label() == label
            && match side {
                None => true,
                Some(Side::Left) => *rel == Relation::Left,
                Some(Side::Right) => *rel == Relation::Right,
                Some(Side::Ahead) => matches!(rel, Relation::Ahead(_)),
                Some(Side::At) => *rel == Relation::At,
            }
    })
}

fn attr_satisfied(
    kind: crate::cas::ActionKind,
    attr: &str,
    value: &AttrValue,
    see_value: Option<&AttrValue>,
    path: &Path,
    map: &WorldMap,
) -> bool {
    use crate::cas::ActionKind::*;
    let final_pose = path.goal();
    match (kind, attr, value) {
        (Turn, "direction", AttrValue::Direction(d)) => first_turn_direction(path) == Some(*d),
        (Travel, "distance", AttrValue::Count(n)) => forward_moves(path) == *n as usize,
        (Travel, "until", AttrValue::Entity(e)) => {
            // First encountered at the very end of the path.
            let nodes: Vec<_> = path.poses().iter().map(|p| p.node).collect();
            let last = *nodes.last().unwrap();
            entity_label_at(map, last, e)
                && nodes[..nodes.len() - 1]
                    .iter()
                    .filter(|n| **n != last)
                    .all(|n| !entity_label_at(map, *n, e))
        }
        (Travel, "past", AttrValue::Entity(e)) => {
            let nodes: Vec<_> = path.poses().iter().map(|p| p.node).collect();
            if nodes.len() < 3 {
                return false;
            }
            nodes[1..nodes.len() - 1]
                .iter()
                .any(|n| entity_label_at(map, *n, e))
        }
        (Face, "target", AttrValue::Entity(e)) => visible_with(map, final_pose, e, None),
        (Verify, "see", AttrValue::Entity(e)) => visible_with(map, final_pose, e, None),
        (Verify, "side", AttrValue::Side(s)) => match see_value {
            Some(AttrValue::Entity(e)) => visible_with(map, final_pose, e, Some(*s)),
            _ => visible_entities(map, final_pose).iter().any(|(_, rel)| {
                matches!(
                    (s, rel),
                    (Side::Left, Relation::Left)
                        | (Side::Right, Relation::Right)
                        | (Side::Ahead, Relation::Ahead(_))
                        | (Side::At, Relation::At)
                )
            }),
        },
        (Find, "object", AttrValue::Entity(e)) => path
            .poses()
            .iter()
            .any(|p| map.object_at(p.node) == Some(e.as_str())),
        _ => false,
    }
}

/// Number of bound attributes in `cmd` that are valid for executing `path`.
pub fn phi(cmd: &CasCommand, path: &Path, map: &WorldMap) -> usize {
    let mut count = 0;
    for action in &cmd.actions {
        let see = action.value("see");
        for slot in &action.attrs {
            if let Some(v) = &slot.value {
                if attr_satisfied(action.kind, slot.name, v, see, path, map) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// 1 iff every bound attribute of `cmd` is valid for `path`.
pub fn delta(cmd: &CasCommand, path: &Path, map: &WorldMap) -> u8 {
    u8::from(cmd.eta() == phi(cmd, path, map))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    /// Set when the alternative-path enumeration hit the cap, so the
    /// denominator is a lower bound.
    pub approximate: bool,
}

/// Enumerate self-avoiding pose sequences from `start` with exactly `len`
/// moves, calling `f` on each. Deterministic order: depth-first with move
/// priority forward < left < right. Returns false when the cap was hit.
fn for_each_alt_path(
    map: &WorldMap,
    start: Pose,
    len: usize,
    cap: usize,
    f: &mut impl FnMut(&Path),
) -> bool {
    let mut stack = vec![start];
    let mut count = 0usize;
    fn recurse(
        map: &WorldMap,
        stack: &mut Vec<Pose>,
        len: usize,
        cap: usize,
        count: &mut usize,
        f: &mut impl FnMut(&Path),
    ) -> bool {
        if stack.len() - 1 == len {
            *count += 1;
            if *count > cap {
                return false;
            }
            let path = Path::new(map, stack.clone()).expect("constructed path is valid");
            f(&path);
            return true;
        }
        let cur = *stack.last().unwrap();
        let moves = [Move::Forward, Move::TurnLeft, Move::TurnRight];
        for m in moves {
            if m == Move::Forward && map.edge(cur.node, cur.ahead()).is_none() {
                continue;
            }
            let next = m.apply(cur);
            if stack.contains(&next) {
                continue;
            }
            stack.push(next);
            let ok = recurse(map, stack, len, cap, count, f);
            stack.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    recurse(map, &mut stack, len, cap, &mut count, f)
}

fn is_self_avoiding(path: &Path) -> bool {
    let mut seen = BTreeSet::new();
    path.poses().iter().all(|p| seen.insert(*p))
}

/// Likelihood that `cmd` is a valid, unambiguous instruction for `path`
/// among the alternative paths a follower could take: self-avoiding pose
/// sequences sharing the start pose and move count of `path`.
pub fn command_likelihood(
    cmd: &CasCommand,
    path: &Path,
    map: &WorldMap,
    cfg: &PlannerConfig,
) -> Likelihood {
    let numerator = delta(cmd, path, map) as f64;
    if numerator == 0.0 {
        return Likelihood {
            value: 0.0,
            approximate: false,
        };
    }
    let horizon = cfg.horizon_for(path);
    let len = path.move_count().min(horizon);
    let truncated = len < path.move_count();
    let mut denominator = 0u64;
    let complete = for_each_alt_path(map, path.start(), len, cfg.max_alt_paths, &mut |alt| {
        denominator += delta(cmd, alt, map) as u64;
    });
    // The query path contributes its own delta; include it when the
    // enumeration cannot have covered it.
    if truncated || !is_self_avoiding(path) {
        denominator += 1;
    }
    debug_assert!(denominator >= 1);
    Likelihood {
        value: numerator / denominator as f64,
        approximate: !complete || truncated,
    }
}

/// Entities visible from any pose along the path; the candidate pool for
/// attribute instantiation.
fn follower_visible_labels(path: &Path, map: &WorldMap) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for pose in path.poses() {
        for (e, _) in visible_entities(map, *pose) {
            out.insert(e.label());
        }
        for e in local_entities(map, pose.node) {
            out.insert(e.label());
        }
    }
    let _ = Entity::Object(String::new());
    out
}

/// Greedily bind the unset attributes of `structure`, in canonical order,
/// keeping at each step the value that maximizes the partial command's
/// likelihood. Returns the completed command and its final likelihood, or
/// `None` when some attribute has an empty candidate domain.
pub fn instantiate_scored(
    structure: &CasStructure,
    path: &Path,
    map: &WorldMap,
    cfg: &PlannerConfig,
) -> Option<(CasCommand, Likelihood)> {
    let visible = follower_visible_labels(path, map);
    let mut cmd = structure.clone();
    let mut last = Likelihood {
        value: delta(&cmd, path, map) as f64,
        approximate: false,
    };
    for ai in 0..cmd.actions.len() {
        let unset: Vec<&'static str> = cmd.actions[ai]
            .attrs
            .iter()
            .filter(|s| s.value.is_none())
            .map(|s| s.name)
            .collect();
        for name in unset {
            let ty = cmd.actions[ai].kind.attr_type(name).expect("declared");
            let domain = attribute_domain(ty, &visible);
            if domain.is_empty() {
                return None;
            }
            let mut best: Option<(AttrValue, Likelihood)> = None;
            for value in domain {
                let mut trial = cmd.clone();
                trial.actions[ai].set(name, value.clone());
                let score = command_likelihood(&trial, path, map, cfg);
                if best
                    .as_ref()
                    .map_or(true, |(_, b)| score.value > b.value)
                {
                    best = Some((value, score));
                }
            }
            let (value, score) = best.expect("non-empty domain");
            cmd.actions[ai].set(name, value);
            last = score;
        }
    }
    Some((cmd, last))
}

/// As `instantiate_scored`, keeping only commands above the threshold.
pub fn instantiate(
    structure: &CasStructure,
    path: &Path,
    map: &WorldMap,
    cfg: &PlannerConfig,
) -> Vec<CasCommand> {
    match instantiate_scored(structure, path, map, cfg) {
        Some((cmd, like)) if like.value > cfg.p_threshold => vec![cmd],
        _ => Vec::new(),
    }
}

/// Instantiate every candidate structure and return the deduplicated set of
/// valid commands, sorted by canonical serialization.
pub fn plan(
    candidates: &[CasStructure],
    path: &Path,
    map: &WorldMap,
    cfg: &PlannerConfig,
) -> Vec<CasCommand> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in candidates {
        for cmd in instantiate(s, path, map, cfg) {
            if seen.insert(cmd.serialize()) {
                out.push(cmd);
            }
        }
    }
    out.sort_by_key(|c| c.serialize());
    out
}

/// Segment kind a command structure is suited to; used by the pipeline to
/// pair structures with path segments.
pub fn structure_segment_kind(structure: &CasStructure) -> SegmentKind {
    let turnish = structure
        .actions
        .iter()
        .any(|a| matches!(a.kind, crate::cas::ActionKind::Turn | crate::cas::ActionKind::Face));
    if turnish {
        SegmentKind::Turn
    } else {
        SegmentKind::Travel
    }
}
