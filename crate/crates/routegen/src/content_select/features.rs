//! MDP feature extraction: 14 binary context features describing a path
//! segment, and 9 integer property features describing a CAS structure.

use serde::{Deserialize, Serialize};

use crate::cas::{ActionKind, AttrValue, CasCommand, CasStructure};
use crate::worldmodel::{visible_entities, Entity, Path, Pose, SegmentKind, WorldMap};

pub const CONTEXT_DIM: usize = 14;
pub const PROPERTY_DIM: usize = 9;

pub const CONTEXT_NAMES: [&str; CONTEXT_DIM] = [
    "t",
    "w",
    "tw",
    "wt",
    "w_obj_at",
    "w_past_obj",
    "w_dead_end",
    "w_goal",
    "t_start",
    "t_new_carp",
    "t_obj_side",
    "t_obj_at",
    "t_new_pict",
    "t_at_T",
];

pub const PROPERTY_NAMES: [&str; PROPERTY_DIM] =
    ["nsl", "cmd", "dep", "eta", "pcp", "ppc", "htw", "nln", "trf"];

/// 14-dimensional binary description of a path segment's situation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ContextVector(pub [u8; CONTEXT_DIM]);

impl ContextVector {
    pub fn get(&self, name: &str) -> u8 {
        let i = CONTEXT_NAMES
            .iter()
            .position(|n| *n == name)
            .expect("known context name");
        self.0[i]
    }

    fn set(&mut self, name: &str, value: bool) {
        let i = CONTEXT_NAMES
            .iter()
            .position(|n| *n == name)
            .expect("known context name");
        self.0[i] = u8::from(value);
    }

    pub fn bits(&self) -> [f64; CONTEXT_DIM] {
        let mut out = [0.0; CONTEXT_DIM];
        for (o, b) in out.iter_mut().zip(self.0.iter()) {
            *o = *b as f64;
        }
        out
    }
}

/// 9 integer-valued features of a CAS structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PropertyVector(pub [i64; PROPERTY_DIM]);

impl PropertyVector {
    pub fn get(&self, name: &str) -> i64 {
        let i = PROPERTY_NAMES
            .iter()
            .position(|n| *n == name)
            .expect("known property name");
        self.0[i]
    }

    pub fn components(&self) -> [f64; PROPERTY_DIM] {
        let mut out = [0.0; PROPERTY_DIM];
        for (o, v) in out.iter_mut().zip(self.0.iter()) {
            *o = *v as f64;
        }
        out
    }
}

/// Floor color of the edge directly ahead of a pose, if any.
fn floor_color_ahead(map: &WorldMap, pose: Pose) -> Option<String> {
    map.edge(pose.node, pose.ahead())
        .map(|e| e.floor_color.clone())
}

fn walls_ahead(map: &WorldMap, pose: Pose) -> Vec<String> {
    map.edge(pose.node, pose.ahead())
        .map(|e| {
            let mut v: Vec<String> = e
                .wall_left
                .iter()
                .chain(e.wall_right.iter())
                .cloned()
                .collect();
            v.sort();
            v
        })
        .unwrap_or_default()
}

/// Context bits for the `segment_index`-th segment of `path`.
///
/// Object and floor/wall bits are gated on the segment kind (the `w_` bits
/// describe travel segments, the `t_` bits turn segments); `t_start`,
/// `w_goal`, and `w_dead_end` apply to either kind.
pub fn extract_context(map: &WorldMap, path: &Path, segment_index: usize) -> ContextVector {
    let segments = path.segments();
    let seg = &segments[segment_index];
    let is_turn = seg.kind == SegmentKind::Turn;
    let is_travel = seg.kind == SegmentKind::Travel;
    let end = seg.end();
    let next_kind = segments.get(segment_index + 1).map(|s| s.kind);

    let mut ctx = ContextVector::default();
    ctx.set("t", is_turn);
    ctx.set("w", is_travel);
    ctx.set("tw", is_turn && next_kind == Some(SegmentKind::Travel));
    ctx.set("wt", is_travel && next_kind == Some(SegmentKind::Turn));
    ctx.set("w_obj_at", is_travel && map.object_at(end.node).is_some());
    ctx.set(
        "w_past_obj",
        is_travel
            && seg.poses[1..seg.poses.len().saturating_sub(1)]
                .iter()
                .any(|p| map.object_at(p.node).is_some()),
    );
    ctx.set("w_dead_end", map.degree(end.node) == 1);
    ctx.set("w_goal", end == path.goal());
    ctx.set("t_start", segment_index == 0);
    ctx.set(
        "t_new_carp",
        is_turn && {
            let before = floor_color_ahead(map, seg.start());
            let after = floor_color_ahead(map, end);
            after.is_some() && after != before
        },
    );
    ctx.set(
        "t_obj_side",
        is_turn
            && visible_entities(map, end)
                .iter()
                .any(|(e, _)| matches!(e, Entity::Object(_))),
    );
    ctx.set("t_obj_at", is_turn && map.object_at(end.node).is_some());
    ctx.set(
        "t_new_pict",
        is_turn && {
            let before = walls_ahead(map, seg.start());
            let after = walls_ahead(map, end);
            !after.is_empty() && after != before
        },
    );
    ctx.set("t_at_T", is_turn && map.degree(end.node) == 1);
    ctx
}

/// Classify a bound entity label for the mention counters.
enum EntityClass {
    FloorColor,
    WallFeature,
    Landmark,
}

fn classify(label: &str) -> EntityClass {
    if label.ends_with("_floor") {
        EntityClass::FloorColor
    } else if label.ends_with("_wall") {
        EntityClass::WallFeature
    } else {
        EntityClass::Landmark
    }
}

fn action_code(kind: ActionKind) -> i64 {
    match kind {
        ActionKind::Turn => 0,
        ActionKind::Travel => 1,
        ActionKind::Face => 2,
        ActionKind::Verify => 3,
        ActionKind::Find => 4,
    }
}

/// Property features of a CAS structure. When the instantiated `command` is
/// available its bound values drive the mention counters; otherwise only the
/// structure's declared shape contributes.
pub fn extract_properties(
    structure: &CasStructure,
    command: Option<&CasCommand>,
) -> PropertyVector {
    let effective = command.unwrap_or(structure);
    let mut nsl_values: std::collections::BTreeSet<String> = Default::default();
    let mut pcp = 0i64;
    let mut ppc = 0i64;
    let mut nln = 0i64;
    let mut htw = 0i64;
    let mut trf = 0i64;
    for action in &effective.actions {
        if action.kind == ActionKind::Travel
            && action.attrs.iter().any(|s| s.name == "until")
        {
            htw = 1;
        }
        for slot in &action.attrs {
            if action.kind.attr_type(slot.name) == Some(crate::cas::AttrType::Entity) {
                // any environment reference implies an allocentric frame
                trf = 1;
            }
            match &slot.value {
                Some(AttrValue::Entity(e)) => {
                    nsl_values.insert(e.clone());
                    match classify(e) {
                        EntityClass::FloorColor => pcp += 1,
                        EntityClass::WallFeature => ppc += 1,
                        EntityClass::Landmark => nln += 1,
                    }
                }
                Some(AttrValue::Count(n)) => {
                    nsl_values.insert(n.to_string());
                }
                _ => {}
            }
        }
    }
    let cmd_code = effective
        .actions
        .first()
        .map(|a| action_code(a.kind))
        .unwrap_or(0);
    let mut out = PropertyVector::default();
    out.0 = [
        nsl_values.len() as i64,
        cmd_code,
        effective.actions.len() as i64,
        effective.eta() as i64,
        pcp,
        ppc,
        htw,
        nln,
        trf,
    ];
    out
}
