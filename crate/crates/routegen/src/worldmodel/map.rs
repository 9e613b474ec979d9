use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub fn new(x: i32, y: i32) -> Self {
        GridPos { x, y }
    }
}

impl std::fmt::Display for GridPos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Labels attached to one edge of the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeInfo {
    pub floor_color: String,
    pub floor_texture: String,
    /// Wall feature on the left side when walking a -> b (a < b in key order).
    pub wall_left: Option<String>,
    /// Wall feature on the right side when walking a -> b.
    pub wall_right: Option<String>,
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate node {0}")]
    DuplicateNode(GridPos),
    #[error("dangling edge: {0} -> {1} references missing node")]
    DanglingEdge(GridPos, GridPos),
    #[error("edge {0} -> {1} is not between 4-neighbors")]
    NonAdjacentEdge(GridPos, GridPos),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(GridPos, GridPos),
    #[error("object placed at missing node {0}")]
    ObjectOffMap(GridPos),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Immutable environment map.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorldMap {
    nodes: BTreeSet<GridPos>,
    /// Keyed by the normalized (min, max) endpoint pair.
    edges: BTreeMap<(GridPos, GridPos), EdgeInfo>,
    objects: BTreeMap<GridPos, String>,
}

fn edge_key(a: GridPos, b: GridPos) -> (GridPos, GridPos) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn adjacent(a: GridPos, b: GridPos) -> bool {
    (a.x - b.x).abs() + (a.y - b.y).abs() == 1
}

impl WorldMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, p: GridPos) {
        self.nodes.insert(p);
    }

    pub fn add_edge(&mut self, a: GridPos, b: GridPos, info: EdgeInfo) -> Result<(), MapError> {
        if !self.nodes.contains(&a) {
            return Err(MapError::DanglingEdge(a, b));
        }
        if !self.nodes.contains(&b) {
            return Err(MapError::DanglingEdge(b, a));
        }
        if !adjacent(a, b) {
            return Err(MapError::NonAdjacentEdge(a, b));
        }
        let key = edge_key(a, b);
        if self.edges.contains_key(&key) {
            return Err(MapError::DuplicateEdge(a, b));
        }
        self.edges.insert(key, info);
        Ok(())
    }

    pub fn place_object(&mut self, node: GridPos, kind: impl Into<String>) -> Result<(), MapError> {
        if !self.nodes.contains(&node) {
            return Err(MapError::ObjectOffMap(node));
        }
        self.objects.insert(node, kind.into());
        Ok(())
    }

    pub fn remove_object(&mut self, node: GridPos) {
        self.objects.remove(&node);
    }

    pub fn contains_node(&self, p: GridPos) -> bool {
        self.nodes.contains(&p)
    }

    pub fn nodes(&self) -> impl Iterator<Item = GridPos> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, a: GridPos, b: GridPos) -> Option<&EdgeInfo> {
        self.edges.get(&edge_key(a, b))
    }

    pub fn edges(&self) -> impl Iterator<Item = (GridPos, GridPos, &EdgeInfo)> + '_ {
        self.edges.iter().map(|((a, b), e)| (*a, *b, e))
    }

    pub fn object_at(&self, node: GridPos) -> Option<&str> {
        self.objects.get(&node).map(|s| s.as_str())
    }

    pub fn objects(&self) -> impl Iterator<Item = (GridPos, &str)> + '_ {
        self.objects.iter().map(|(p, k)| (*p, k.as_str()))
    }

    /// Neighbors connected by an edge, in deterministic order.
    pub fn neighbors(&self, p: GridPos) -> Vec<GridPos> {
        let candidates = [
            GridPos::new(p.x, p.y + 1),
            GridPos::new(p.x + 1, p.y),
            GridPos::new(p.x, p.y - 1),
            GridPos::new(p.x - 1, p.y),
        ];
        candidates
            .into_iter()
            .filter(|q| self.edge(p, *q).is_some())
            .collect()
    }

    pub fn degree(&self, p: GridPos) -> usize {
        self.neighbors(p).len()
    }

    /// Distinct object labels present in the map, sorted.
    pub fn object_vocab(&self) -> Vec<String> {
        let set: BTreeSet<_> = self.objects.values().cloned().collect();
        set.into_iter().collect()
    }

    pub fn floor_color_vocab(&self) -> Vec<String> {
        let set: BTreeSet<_> = self.edges.values().map(|e| e.floor_color.clone()).collect();
        set.into_iter().collect()
    }

    pub fn floor_texture_vocab(&self) -> Vec<String> {
        let set: BTreeSet<_> = self
            .edges
            .values()
            .map(|e| e.floor_texture.clone())
            .collect();
        set.into_iter().collect()
    }

    pub fn wall_feature_vocab(&self) -> Vec<String> {
        let set: BTreeSet<_> = self
            .edges
            .values()
            .flat_map(|e| e.wall_left.iter().chain(e.wall_right.iter()).cloned())
            .collect();
        set.into_iter().collect()
    }
}

// On-disk document. Key names are part of the interchange format; unknown
// keys are rejected.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    nodes: Vec<[i32; 2]>,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    a: [i32; 2],
    b: [i32; 2],
    floor_color: String,
    floor_texture: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wall_left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wall_right: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    node: [i32; 2],
    kind: String,
}

/// Parse a map document from a byte stream.
pub fn load_map(mut source: impl Read) -> Result<WorldMap, MapError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: MapDoc = serde_json::from_str(&text)?;
    let mut map = WorldMap::new();
    for [x, y] in &doc.nodes {
        let p = GridPos::new(*x, *y);
        if map.contains_node(p) {
            return Err(MapError::DuplicateNode(p));
        }
        map.add_node(p);
    }
    for e in &doc.edges {
        let a = GridPos::new(e.a[0], e.a[1]);
        let b = GridPos::new(e.b[0], e.b[1]);
        map.add_edge(
            a,
            b,
            EdgeInfo {
                floor_color: e.floor_color.clone(),
                floor_texture: e.floor_texture.clone(),
                wall_left: e.wall_left.clone(),
                wall_right: e.wall_right.clone(),
            },
        )?;
    }
    for o in &doc.objects {
        map.place_object(GridPos::new(o.node[0], o.node[1]), o.kind.clone())?;
    }
    Ok(map)
}

/// Serialize a map back to its document form.
pub fn save_map(map: &WorldMap) -> String {
    let doc = MapDoc {
        nodes: map.nodes().map(|p| [p.x, p.y]).collect(),
        edges: map
            .edges()
            .map(|(a, b, e)| EdgeDoc {
                a: [a.x, a.y],
                b: [b.x, b.y],
                floor_color: e.floor_color.clone(),
                floor_texture: e.floor_texture.clone(),
                wall_left: e.wall_left.clone(),
                wall_right: e.wall_right.clone(),
            })
            .collect(),
        objects: map
            .objects()
            .map(|(p, k)| ObjectDoc {
                node: [p.x, p.y],
                kind: k.to_string(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("map serialization cannot fail")
}
