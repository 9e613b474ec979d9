use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use super::map::WorldMap;
use super::path::{Heading, Move, Path, Pose};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("pose {0:?} is not on the map")]
    OffMap(Pose),
    #[error("goal unreachable from start")]
    Unreachable,
}

/// Cost of a route: total atomic moves, then number of turns.
type Cost = (u32, u32);

fn move_cost(m: Move) -> Cost {
    match m {
        Move::Forward => (1, 0),
        Move::TurnLeft | Move::TurnRight => (1, 1),
    }
}

fn add(a: Cost, b: Cost) -> Cost {
    (a.0 + b.0, a.1 + b.1)
}

/// Moves applicable from a pose, in tie-break priority order.
fn successors(map: &WorldMap, p: Pose) -> Vec<(Move, Pose)> {
    let mut out = Vec::with_capacity(3);
    if map.edge(p.node, p.ahead()).is_some() {
        out.push((Move::Forward, Move::Forward.apply(p)));
    }
    out.push((Move::TurnLeft, Move::TurnLeft.apply(p)));
    out.push((Move::TurnRight, Move::TurnRight.apply(p)));
    out
}

/// Minimum-cost pose path from `start` to `goal`.
///
/// Cost counts turns and translations equally; ties are broken by fewer
/// turns, then by move priority forward < left < right at each step.
pub fn shortest_path(map: &WorldMap, start: Pose, goal: Pose) -> Result<Path, SearchError> {
    if !map.contains_node(start.node) {
        return Err(SearchError::OffMap(start));
    }
    if !map.contains_node(goal.node) {
        return Err(SearchError::OffMap(goal));
    }
    // Dijkstra from the goal over reversed moves, so that forward
    // reconstruction can apply the documented tie-break greedily.
    let mut to_goal: HashMap<Pose, Cost> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(Cost, (i32, i32, u8))>> = BinaryHeap::new();
    let key = |p: Pose| (p.node.x, p.node.y, p.heading as u8);
    to_goal.insert(goal, (0, 0));
    heap.push(Reverse(((0, 0), key(goal))));
    let decode = |k: (i32, i32, u8)| {
        Pose::new(
            super::map::GridPos::new(k.0, k.1),
            Heading::ALL[k.2 as usize],
        )
    };
    while let Some(Reverse((cost, k))) = heap.pop() {
        let p = decode(k);
        if to_goal.get(&p) != Some(&cost) {
            continue;
        }
        // Reverse moves: q reaches p by one atomic move.
        let mut preds = Vec::with_capacity(3);
        let behind = Pose::new(p.node, p.heading.back()).ahead();
        if map.edge(p.node, behind).is_some() {
            preds.push((Pose::new(behind, p.heading), Move::Forward));
        }
        preds.push((Pose::new(p.node, p.heading.right()), Move::TurnLeft));
        preds.push((Pose::new(p.node, p.heading.left()), Move::TurnRight));
        for (q, m) in preds {
            let c = add(cost, move_cost(m));
            if to_goal.get(&q).map_or(true, |best| c < *best) {
                to_goal.insert(q, c);
                heap.push(Reverse((c, key(q))));
            }
        }
    }
    let total = *to_goal.get(&start).ok_or(SearchError::Unreachable)?;
    // Forward reconstruction with the move-priority tie-break.
    let mut poses = vec![start];
    let mut cur = start;
    let mut remaining = total;
    while cur != goal {
        let mut advanced = false;
        for (m, next) in successors(map, cur) {
            let c = move_cost(m);
            if let Some(rest) = to_goal.get(&next) {
                if add(*rest, c) == remaining {
                    poses.push(next);
                    cur = next;
                    remaining = *rest;
                    advanced = true;
                    break;
                }
            }
        }
        assert!(advanced, "inconsistent distance table");
    }
    Ok(Path::new(map, poses).expect("search yields a valid path"))
}
