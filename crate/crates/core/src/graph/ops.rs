use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Graph, GraphError, HamiltonianCycle, NodeId, Permutation};

/// Random draws `neighbor_set_for_insert` makes before giving up.
pub const NEIGHBOR_SET_RETRIES: usize = 1000;

/// Full-regularity attempts made by the initial graph builder.
const INIT_ATTEMPTS: usize = 64;

/// True iff `hc` visits every vertex of `g` exactly once and every
/// consecutive pair, including the closing one, is an edge of `g`.
pub fn is_hamiltonian_cycle(g: &Graph, hc: &HamiltonianCycle) -> bool {
    hc.len() == g.order() && hc.as_slice().iter().all(|&v| g.contains(v)) && hc.edges().all(|(a, b)| g.has_edge(a, b))
}

/// Relabels graph and cycle through `p`. Both results come back canonical.
pub fn apply_permutation(
    g: &Graph,
    hc: &HamiltonianCycle,
    p: &Permutation,
) -> Result<(Graph, HamiltonianCycle), GraphError> {
    let graph = g.permuted(p)?;
    let cycle = hc.relabeled(p)?;
    Ok((graph, cycle))
}

/// Generates the initial shared graph over `{0..n-1}` and its secret cycle.
///
/// The cycle follows a uniformly random permutation of the vertices. See
/// [`build_initial_graph_with_cycle`] for how the remaining edges are drawn.
pub fn build_initial_graph<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<(Graph, HamiltonianCycle), GraphError> {
    if n < 4 {
        return Err(GraphError::InvalidInitialization(format!(
            "need at least 4 nodes, got {n}"
        )));
    }
    let n32 = u32::try_from(n).map_err(|_| GraphError::InvalidInitialization("too many nodes".into()))?;
    let mut order: Vec<NodeId> = (0..n32).map(NodeId).collect();
    order.shuffle(rng);
    let cycle = HamiltonianCycle::new(order)?;
    build_initial_graph_with_cycle(&cycle, m, rng).map(|g| (g, cycle))
}

/// Completes a known cycle into the initial graph.
///
/// Every vertex owns a neighbor group of size `2m/n`: its two cycle
/// neighbors plus distinct random partners. Partners are only drawn among
/// vertices whose group is not yet full, so no degree exceeds `2m/n` and the
/// edge count never exceeds `m`. When the random order leaves some vertex
/// short the whole draw is repeated, up to a fixed number of attempts; the
/// last attempt is returned even if it is not perfectly regular.
pub fn build_initial_graph_with_cycle<R: Rng + ?Sized>(
    cycle: &HamiltonianCycle,
    m: usize,
    rng: &mut R,
) -> Result<Graph, GraphError> {
    let n = cycle.len();
    let invalid = |why: String| GraphError::InvalidInitialization(why);
    if n < 4 {
        return Err(invalid(format!("need at least 4 nodes, got {n}")));
    }
    if !(2 * m).is_multiple_of(n) {
        return Err(invalid(format!("2m/n = {}/{n} is not an integer", 2 * m)));
    }
    let degree = 2 * m / n;
    if degree < 2 {
        return Err(invalid(format!("degree 2m/n = {degree} is below 2")));
    }
    if degree >= n {
        return Err(invalid(format!("degree {degree} needs more than {n} nodes")));
    }

    let base = Graph::cycle_graph(cycle.as_slice())?;
    let mut graph = base.clone();
    for _ in 0..INIT_ATTEMPTS {
        graph = base.clone();
        let mut owners = cycle.as_slice().to_vec();
        owners.shuffle(rng);
        for &v in &owners {
            let missing = degree.saturating_sub(graph.degree(v));
            if missing == 0 {
                continue;
            }
            let mut open: Vec<NodeId> = graph
                .vertices()
                .filter(|&u| u != v && !graph.has_edge(u, v) && graph.degree(u) < degree)
                .collect();
            open.shuffle(rng);
            for u in open.into_iter().take(missing) {
                graph.add_edge(v, u)?;
            }
        }
        if graph.size() == m {
            break;
        }
    }
    Ok(graph)
}

/// Smallest vertex index not currently in use.
pub fn assign_new_id(g: &Graph) -> NodeId {
    let mut next = 0u32;
    for v in g.vertices() {
        if v.0 != next {
            break;
        }
        next += 1;
    }
    NodeId(next)
}

/// Draws the neighbor set of a node about to be inserted: a random
/// cycle-adjacent pair plus `degree - 2` fillers, none of which is
/// cycle-adjacent to another member of the set. The pair is therefore the
/// only cycle edge inside the set, which is what lets every replica find the
/// splice position on its own.
pub fn neighbor_set_for_insert<R: Rng + ?Sized>(
    g: &Graph,
    hc: &HamiltonianCycle,
    degree: usize,
    rng: &mut R,
) -> Result<BTreeSet<NodeId>, GraphError> {
    check_neighbor_request(g, hc, degree)?;
    for _ in 0..NEIGHBOR_SET_RETRIES {
        let a = *hc.as_slice().choose(rng).expect("non-empty cycle");
        let (p, s) = hc.neighbors(a).expect("vertex is on the cycle");
        let b = if rng.gen::<bool>() { p } else { s };
        if let Some(set) = draw_fillers(hc, (a, b), degree, rng) {
            return Ok(set);
        }
    }
    Err(GraphError::NeighborSetUnsatisfiable)
}

/// Like [`neighbor_set_for_insert`] with the splice pair fixed by the caller.
pub fn neighbor_set_with_pair<R: Rng + ?Sized>(
    g: &Graph,
    hc: &HamiltonianCycle,
    pair: (NodeId, NodeId),
    degree: usize,
    rng: &mut R,
) -> Result<BTreeSet<NodeId>, GraphError> {
    check_neighbor_request(g, hc, degree)?;
    if !hc.are_adjacent(pair.0, pair.1) {
        return Err(GraphError::InvalidSplice(format!(
            "{} and {} are not cycle-adjacent",
            pair.0, pair.1
        )));
    }
    for _ in 0..NEIGHBOR_SET_RETRIES {
        if let Some(set) = draw_fillers(hc, pair, degree, rng) {
            return Ok(set);
        }
    }
    Err(GraphError::NeighborSetUnsatisfiable)
}

fn check_neighbor_request(g: &Graph, hc: &HamiltonianCycle, degree: usize) -> Result<(), GraphError> {
    if degree < 2 || g.order() < degree + 2 {
        return Err(GraphError::NeighborSetUnsatisfiable);
    }
    if !is_hamiltonian_cycle(g, hc) {
        return Err(GraphError::InvalidSplice("cycle does not match graph".into()));
    }
    Ok(())
}

fn draw_fillers<R: Rng + ?Sized>(
    hc: &HamiltonianCycle,
    (a, b): (NodeId, NodeId),
    degree: usize,
    rng: &mut R,
) -> Option<BTreeSet<NodeId>> {
    let mut set: BTreeSet<NodeId> = [a, b].into();
    let mut candidates: Vec<NodeId> = hc
        .as_slice()
        .iter()
        .copied()
        .filter(|&v| v != a && v != b && !hc.are_adjacent(v, a) && !hc.are_adjacent(v, b))
        .collect();
    candidates.shuffle(rng);
    let wanted = degree - 2;
    let mut taken = 0;
    for v in candidates {
        if taken == wanted {
            break;
        }
        if set.iter().all(|&w| !hc.are_adjacent(v, w)) {
            set.insert(v);
            taken += 1;
        }
    }
    (taken == wanted).then_some(set)
}

/// The unique pair of `neighbors` that sits next to each other on `hc`,
/// ordered as the canonical traversal meets them.
pub fn locate_insertion_pair(
    hc: &HamiltonianCycle,
    neighbors: &BTreeSet<NodeId>,
) -> Result<(NodeId, NodeId), GraphError> {
    let mut pairs = hc
        .edges()
        .filter(|(a, b)| neighbors.contains(a) && neighbors.contains(b));
    match (pairs.next(), pairs.next()) {
        (Some(pair), None) => Ok(pair),
        (None, _) => Err(GraphError::AmbiguousInsertion(0)),
        (Some(_), Some(_)) => Err(GraphError::AmbiguousInsertion(2 + pairs.count())),
    }
}

/// Adds `new_id` joined to every member of `neighbors` and splices it into
/// the cycle between the unique adjacent pair. The pair's own edge stays in
/// the graph; it only leaves the cycle.
pub fn splice_insert(
    g: &Graph,
    hc: &HamiltonianCycle,
    new_id: NodeId,
    neighbors: &BTreeSet<NodeId>,
) -> Result<(Graph, HamiltonianCycle), GraphError> {
    let invalid = |why: String| GraphError::InvalidSplice(why);
    if g.contains(new_id) {
        return Err(invalid(format!("{new_id} is already a vertex")));
    }
    if let Some(v) = neighbors.iter().find(|&&v| !g.contains(v)) {
        return Err(invalid(format!("neighbor {v} is not a vertex")));
    }
    if !is_hamiltonian_cycle(g, hc) {
        return Err(invalid("cycle does not match graph".into()));
    }
    let (a, b) = locate_insertion_pair(hc, neighbors).map_err(|e| invalid(e.to_string()))?;

    let mut graph = g.clone();
    graph.add_vertex(new_id);
    for &w in neighbors {
        graph.add_edge(new_id, w)?;
    }
    let cycle = hc.spliced_in(a, b, new_id)?;
    Ok((graph, cycle))
}

/// Removes `victim` and bridges its two cycle neighbors, in the graph as
/// well as on the cycle. Other edges are left alone.
pub fn splice_delete(
    g: &Graph,
    hc: &HamiltonianCycle,
    victim: NodeId,
) -> Result<(Graph, HamiltonianCycle), GraphError> {
    if !g.contains(victim) {
        return Err(GraphError::UnknownNode(victim));
    }
    if g.order() < 4 {
        return Err(GraphError::BelowMinimumOrder(g.order()));
    }
    if !is_hamiltonian_cycle(g, hc) {
        return Err(GraphError::InvalidSplice("cycle does not match graph".into()));
    }
    let (j, k) = hc.neighbors(victim).ok_or(GraphError::UnknownNode(victim))?;
    let mut graph = g.clone();
    graph.remove_vertex(victim);
    graph.add_edge(j, k)?;
    let cycle = hc.spliced_out(victim)?;
    Ok((graph, cycle))
}
