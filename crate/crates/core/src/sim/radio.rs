use std::collections::VecDeque;

use super::config::{Connectivity, Geometric};
use super::mobility::Point;

/// Which channels two devices share.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reach {
    None,
    Data,
    DataAndSecure,
}

/// Radio reachability by distance. Both ranges are inclusive.
pub fn reachable(a: Point, b: Point, g: &Geometric) -> Reach {
    let d = a.distance(b);
    if d <= g.secure_range {
        Reach::DataAndSecure
    } else if d <= g.data_range {
        Reach::Data
    } else {
        Reach::None
    }
}

/// Pairwise reachability under either connectivity model.
pub fn link(conn: &Connectivity, a: Point, b: Point) -> Reach {
    match conn {
        Connectivity::FullMesh => Reach::DataAndSecure,
        Connectivity::Geometric(g) => reachable(a, b, g),
    }
}

/// Result of flooding one broadcast.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flood {
    /// Indices that got the message, source excluded, in delivery order.
    pub reached: Vec<usize>,
    /// How many times each index re-sent the message.
    pub forwards: Vec<u32>,
}

/// Floods a broadcast from `src` over the devices that are listening
/// (`Some` position). Every receiver re-sends once; duplicates are
/// dropped.
pub fn broadcast_deliver(conn: &Connectivity, src: usize, positions: &[Option<Point>]) -> Flood {
    let n = positions.len();
    let mut seen = vec![false; n];
    let mut forwards = vec![0u32; n];
    let mut reached = Vec::new();
    let mut queue = VecDeque::from([src]);
    seen[src] = true;
    while let Some(u) = queue.pop_front() {
        let Some(pu) = positions[u] else { continue };
        forwards[u] += 1;
        for (v, pv) in positions.iter().enumerate() {
            let Some(pv) = *pv else { continue };
            if seen[v] || link(conn, pu, pv) == Reach::None {
                continue;
            }
            seen[v] = true;
            reached.push(v);
            queue.push_back(v);
        }
    }
    Flood { reached, forwards }
}

/// Whether `a` and `b` are in the same multi-hop component of the data
/// channel.
pub fn connected(conn: &Connectivity, a: usize, b: usize, positions: &[Option<Point>]) -> bool {
    if positions[a].is_none() || positions[b].is_none() {
        return false;
    }
    a == b || broadcast_deliver(conn, a, positions).reached.contains(&b)
}
