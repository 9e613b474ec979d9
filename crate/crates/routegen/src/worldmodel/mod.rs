//! Grid-world maps, poses, paths, and visibility queries.
//!
//! A map is a hybrid metric-topologic-semantic representation: grid nodes
//! connected by 4-neighbor edges that carry floor labels and optional wall
//! features, with optional objects placed at nodes.

mod map;
mod path;
mod search;
mod visibility;

pub use map::{load_map, save_map, EdgeInfo, GridPos, MapError, WorldMap};
pub use path::{segment_path, Heading, Move, Path, PathError, PathSegment, Pose, SegmentKind};
pub use search::{shortest_path, SearchError};
pub use visibility::{local_entities, visible_entities, Entity, Relation};
