use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::map::{GridPos, WorldMap};

/// One of the four cardinal headings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    /// Unit step in grid coordinates (N is +y).
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::N => (0, 1),
            Heading::E => (1, 0),
            Heading::S => (0, -1),
            Heading::W => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn back(self) -> Heading {
        self.left().left()
    }
}

impl std::fmt::Display for Heading {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            Heading::N => "N",
            Heading::E => "E",
            Heading::S => "S",
            Heading::W => "W",
        };
        f.write_str(c)
    }
}

impl std::str::FromStr for Heading {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "n" => Ok(Heading::N),
            "E" | "e" => Ok(Heading::E),
            "S" | "s" => Ok(Heading::S),
            "W" | "w" => Ok(Heading::W),
            other => Err(format!("unknown heading '{other}'")),
        }
    }
}

/// Position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub node: GridPos,
    pub heading: Heading,
}

impl Pose {
    pub fn new(node: GridPos, heading: Heading) -> Self {
        Pose { node, heading }
    }

    /// Node one step ahead of this pose (not necessarily on the map).
    pub fn ahead(self) -> GridPos {
        let (dx, dy) = self.heading.delta();
        GridPos::new(self.node.x + dx, self.node.y + dy)
    }
}

/// Atomic moves between consecutive poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Move {
    pub fn apply(self, p: Pose) -> Pose {
        match self {
            Move::Forward => Pose::new(p.ahead(), p.heading),
            Move::TurnLeft => Pose::new(p.node, p.heading.left()),
            Move::TurnRight => Pose::new(p.node, p.heading.right()),
        }
    }
}

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path must contain at least one pose")]
    Empty,
    #[error("pose {0:?} is not on the map")]
    OffMap(Pose),
    #[error("poses {0} and {1} are not connected by one atomic move")]
    IllegalStep(usize, usize),
}

/// A pose sequence where consecutive poses differ by one atomic move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    poses: Vec<Pose>,
}

impl Path {
    pub fn new(map: &WorldMap, poses: Vec<Pose>) -> Result<Self, PathError> {
        if poses.is_empty() {
            return Err(PathError::Empty);
        }
        for p in [poses[0], *poses.last().unwrap()] {
            if !map.contains_node(p.node) {
                return Err(PathError::OffMap(p));
            }
        }
        for i in 1..poses.len() {
            if classify_step(poses[i - 1], poses[i]).is_none() {
                return Err(PathError::IllegalStep(i - 1, i));
            }
            if poses[i].node != poses[i - 1].node && map.edge(poses[i - 1].node, poses[i].node).is_none() {
                return Err(PathError::IllegalStep(i - 1, i));
            }
        }
        Ok(Path { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    pub fn goal(&self) -> Pose {
        *self.poses.last().unwrap()
    }

    /// Number of atomic moves (pose count minus one).
    pub fn move_count(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn moves(&self) -> Vec<Move> {
        (1..self.poses.len())
            .map(|i| classify_step(self.poses[i - 1], self.poses[i]).expect("validated path"))
            .collect()
    }

    pub fn segments(&self) -> Vec<PathSegment> {
        segment_path(self)
    }
}

fn classify_step(a: Pose, b: Pose) -> Option<Move> {
    if b == Move::Forward.apply(a) {
        Some(Move::Forward)
    } else if b == Move::TurnLeft.apply(a) {
        Some(Move::TurnLeft)
    } else if b == Move::TurnRight.apply(a) {
        Some(Move::TurnRight)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Turn,
    Travel,
}

/// Maximal run of turning or of straight travel within a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSegment {
    pub poses: Vec<Pose>,
    pub kind: SegmentKind,
}

impl PathSegment {
    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    pub fn end(&self) -> Pose {
        *self.poses.last().unwrap()
    }

    pub fn move_count(&self) -> usize {
        self.poses.len() - 1
    }

    /// The segment as a standalone path.
    pub fn as_path(&self) -> Path {
        Path {
            poses: self.poses.clone(),
        }
    }
}

/// Split a path at changes between turning and travelling.
///
/// A single-pose path has no moves and yields no segments. Consecutive
/// segments share their boundary pose, so concatenation reproduces the path.
pub fn segment_path(path: &Path) -> Vec<PathSegment> {
    let poses = path.poses();
    let moves = path.moves();
    if moves.is_empty() {
        return Vec::new();
    }
    let kind_of = |m: Move| match m {
        Move::Forward => SegmentKind::Travel,
        _ => SegmentKind::Turn,
    };
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut kind = kind_of(moves[0]);
    for (i, m) in moves.iter().enumerate().skip(1) {
        let k = kind_of(*m);
        if k != kind {
            segments.push(PathSegment {
                poses: poses[start..=i].to_vec(),
                kind,
            });
            start = i;
            kind = k;
        }
    }
    segments.push(PathSegment {
        poses: poses[start..].to_vec(),
        kind,
    });
    segments
}
