//! Synthetic desk-scale corpus: generated grid maps, sampled shortest
//! paths, planner-instantiated commands, and templated English rendering.
//! Rendering is deterministic per (command, seed) so repeated commands
//! always phrase identically while distinct commands vary in phrasing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Demonstration;
use super::lexicon::{Lexicon, LexiconEntry};
use crate::cas::{ActionKind, AttrValue, CasAction, CasCommand, CasStructure};
use crate::planner::{instantiate_scored, plan, structure_segment_kind, PlannerConfig};
use crate::worldmodel::{
    segment_path, shortest_path, EdgeInfo, GridPos, Heading, Pose, SegmentKind, WorldMap,
};

pub const COLORS: [&str; 8] = [
    "blue", "red", "green", "yellow", "gray", "pink", "orange", "purple",
];
pub const TEXTURES: [&str; 6] = ["carpet", "wood", "stone", "tile", "brick", "gravel"];
pub const OBJECTS: [&str; 8] = [
    "chair", "lamp", "sofa", "stool", "easel", "hatrack", "bench", "barrel",
];
pub const WALLS: [&str; 4] = ["picture", "poster", "window", "shelf"];

const NUMBER_WORDS: [&str; 9] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

/// Random connected grid map with colored floors, textures, objects, and
/// occasional wall features.
pub fn synth_map(width: i32, height: i32, seed: u64) -> WorldMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = WorldMap::new();
    for x in 0..width {
        for y in 0..height {
            map.add_node(GridPos::new(x, y));
        }
    }
    let add = |map: &mut WorldMap, a: GridPos, b: GridPos, rng: &mut ChaCha8Rng| {
        let info = EdgeInfo {
            floor_color: COLORS[rng.gen_range(0..COLORS.len())].to_string(),
            floor_texture: TEXTURES[rng.gen_range(0..TEXTURES.len())].to_string(),
            wall_left: if rng.gen_bool(0.2) {
                Some(WALLS[rng.gen_range(0..WALLS.len())].to_string())
            } else {
                None
            },
            wall_right: if rng.gen_bool(0.2) {
                Some(WALLS[rng.gen_range(0..WALLS.len())].to_string())
            } else {
                None
            },
        };
        map.add_edge(a, b, info).expect("nodes exist");
    };
    for x in 0..width {
        for y in 0..height {
            let p = GridPos::new(x, y);
            if x + 1 < width && (y == 0 || y == height - 1 || rng.gen_bool(0.6)) {
                add(&mut map, p, GridPos::new(x + 1, y), &mut rng);
            }
            if y + 1 < height && (x == 0 || x == width - 1 || rng.gen_bool(0.6)) {
                add(&mut map, p, GridPos::new(x, y + 1), &mut rng);
            }
        }
    }
    let nodes: Vec<GridPos> = map.nodes().collect();
    for node in nodes {
        if rng.gen_bool(0.3) {
            let kind = OBJECTS[rng.gen_range(0..OBJECTS.len())];
            map.place_object(node, kind).expect("node exists");
        }
    }
    map
}

/// Candidate structures the generator instantiates for a segment kind.
pub fn candidate_structures(kind: SegmentKind) -> Vec<CasStructure> {
    let a = |k: ActionKind, attrs: &[&str]| {
        let mut action = CasAction::new(k);
        for name in attrs {
            action = action.declare(name).expect("valid attribute");
        }
        CasCommand::new(vec![action])
    };
    match kind {
        SegmentKind::Turn => vec![
            a(ActionKind::Turn, &["direction"]),
            a(ActionKind::Face, &["target"]),
        ],
        SegmentKind::Travel => vec![
            a(ActionKind::Travel, &["distance"]),
            a(ActionKind::Travel, &["distance", "until"]),
            a(ActionKind::Travel, &["until"]),
            a(ActionKind::Find, &["object"]),
        ],
    }
}

fn fnv1a(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn surface_of(value: &AttrValue) -> String {
    match value {
        AttrValue::Count(n) => NUMBER_WORDS[(*n as usize) - 1].to_string(),
        AttrValue::Direction(d) => d.name().to_lowercase(),
        AttrValue::Side(s) => s.name().to_string(),
        AttrValue::Entity(e) => e.replace('_', " "),
    }
}

fn pick<'a>(templates: &[&'a str], cmd_key: &str, seed: u64) -> &'a str {
    let h = fnv1a(format!("{seed}:{cmd_key}").as_bytes());
    templates[(h % templates.len() as u64) as usize]
}

fn render_action(action: &CasAction, cmd_key: &str, seed: u64) -> String {
    let val = |name: &str| action.value(name).map(surface_of);
    let template = match action.kind {
        ActionKind::Turn => {
            pick(&["turn {direction} at this spot", "take a {direction} turn right here", "make a {direction} turn before going on"], cmd_key, seed)
        }
        ActionKind::Face => {
            pick(&["turn in place so that you face the {target}", "turn to face the {target} before moving", "rotate until you face the {target} directly"], cmd_key, seed)
        }
        ActionKind::Travel => {
            let has_d = action.value("distance").is_some();
            let has_u = action.value("until").is_some();
            let has_p = action.value("past").is_some();
            match (has_d, has_u, has_p) {
                (true, true, _) => pick(
                    &[
                        "walk {distance} steps until you reach the {until} and stop at the {until} after {distance} steps",
                        "go {distance} blocks to the {until} and wait at the {until} after {distance} blocks",
                        "move {distance} segments to the {until} and stand at the {until} after {distance} segments",
                    ],
                    cmd_key,
                    seed,
                ),
                (true, false, true) => pick(
                    &["walk {distance} steps going past the {past} on the way"],
                    cmd_key,
                    seed,
                ),
                (true, false, false) => pick(
                    &["walk {distance} steps straight down the hall", "go forward {distance} blocks along the corridor", "move {distance} segments ahead in the same direction"],
                    cmd_key,
                    seed,
                ),
                (false, true, _) => pick(
                    &["walk until you reach the {until} and stop", "go ahead to the {until} and wait there", "keep going until the {until} is right below you"],
                    cmd_key,
                    seed,
                ),
                _ => pick(&["walk forward", "keep going straight"], cmd_key, seed),
            }
        }
        ActionKind::Verify => pick(
            &["check that the {see} is at your {side} side", "you should see the {see} on your {side} side"],
            cmd_key,
            seed,
        ),
        ActionKind::Find => pick(
            &["find the {object} and walk over to it", "go to the {object} and stop there", "move to the {object} and stay there"],
            cmd_key,
            seed,
        ),
    };
    let mut out = template.to_string();
    for (name, _) in action.kind.grammar() {
        if let Some(word) = val(name) {
            out = out.replace(&format!("{{{name}}}"), &word);
        }
    }
    out
}

/// Deterministic templated rendering of a command. The template choice is
/// keyed on each action's structure (kind plus attribute names), so every
/// command with the same shape reads the same way and swapping attribute
/// values only swaps the slot words. Different shapes spread across
/// phrasings.
pub fn render_instruction(cmd: &CasCommand, seed: u64) -> String {
    cmd.actions
        .iter()
        .map(|a| {
            let key = CasCommand::new(vec![a.clone()]).structure_of().serialize();
            render_action(a, &key, seed)
        })
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Lexicon covering every value the synthetic renderer can emit.
pub fn synth_lexicon() -> Lexicon {
    let mut entries = Vec::new();
    for d in ["Left", "Right", "Back"] {
        entries.push(LexiconEntry {
            value: d.to_string(),
            category: "direction".to_string(),
            surface: vec![d.to_lowercase()],
        });
    }
    for n in 1..=9usize {
        entries.push(LexiconEntry {
            value: n.to_string(),
            category: "count".to_string(),
            surface: vec![NUMBER_WORDS[n - 1].to_string()],
        });
    }
    for o in OBJECTS {
        entries.push(LexiconEntry {
            value: o.to_string(),
            category: "object".to_string(),
            surface: vec![o.to_string()],
        });
    }
    for c in COLORS {
        entries.push(LexiconEntry {
            value: format!("{c}_floor"),
            category: "floor".to_string(),
            surface: vec![format!("{c} floor")],
        });
    }
    for t in TEXTURES {
        entries.push(LexiconEntry {
            value: format!("{t}_texture"),
            category: "texture".to_string(),
            surface: vec![format!("{t} texture")],
        });
    }
    for w in WALLS {
        entries.push(LexiconEntry {
            value: format!("{w}_wall"),
            category: "wall".to_string(),
            surface: vec![format!("{w} wall")],
        });
    }
    Lexicon { entries }
}

/// Sample demonstrations over the given maps: random start/goal poses,
/// shortest paths, planner-instantiated commands, templated instructions.
/// Deterministic under the seed; produces exactly `n` demonstrations unless
/// the maps cannot support them.
pub fn synth_corpus(maps: &[WorldMap], n: usize, seed: u64) -> Vec<Demonstration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PlannerConfig::default();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < n * 50 {
        attempts += 1;
        let mi = rng.gen_range(0..maps.len());
        let map = &maps[mi];
        let nodes: Vec<GridPos> = map.nodes().collect();
        let start = Pose::new(
            nodes[rng.gen_range(0..nodes.len())],
            Heading::ALL[rng.gen_range(0..4)],
        );
        let goal = Pose::new(
            nodes[rng.gen_range(0..nodes.len())],
            Heading::ALL[rng.gen_range(0..4)],
        );
        if start.node == goal.node {
            continue;
        }
        let Ok(path) = shortest_path(map, start, goal) else {
            continue;
        };
        let segments = segment_path(&path);
        if segments.is_empty() || segments.len() > 4 {
            continue;
        }
        let mut cas = Vec::with_capacity(segments.len());
        let mut instruction = Vec::with_capacity(segments.len());
        let mut ok = true;
        for seg in &segments {
            let seg_path = seg.as_path();
            let candidates = candidate_structures(seg.kind);
            let planned = plan(&candidates, &seg_path, map, &cfg);
            // spread segments across valid structures instead of always
            // taking the first, so the corpus covers more command shapes
            let cmd = if !planned.is_empty() {
                let key = fnv1a(format!("{seed}:{:?}", seg_path.poses()).as_bytes());
                planned[(key % planned.len() as u64) as usize].clone()
            } else {
                // fall back to the best sub-threshold instantiation
                let mut best: Option<(CasCommand, f64)> = None;
                for s in &candidates {
                    if structure_segment_kind(s) != seg.kind {
                        continue;
                    }
                    if let Some((c, like)) = instantiate_scored(s, &seg_path, map, &cfg) {
                        if best.as_ref().map_or(true, |(_, b)| like.value > *b) {
                            best = Some((c, like.value));
                        }
                    }
                }
                match best {
                    Some((c, _)) => c,
                    None => {
                        ok = false;
                        break;
                    }
                }
            };
            instruction.push(render_instruction(&cmd, seed));
            cas.push(cmd);
        }
        if !ok {
            continue;
        }
        let idx = out.len();
        out.push(Demonstration {
            map_id: format!("m{mi}"),
            poses: path.poses().to_vec(),
            cas,
            instruction,
            instructor_id: "synth".to_string(),
            paragraph_id: format!("p{:05}", idx / 4),
        });
    }
    out
}
