//! CVRP solving: savings construction, ruin-and-recreate improvement and an
//! exhaustive oracle for tiny instances.
//!
//! The solver works on *visit units*. A unit is either a free client or a
//! forced [`Segment`], an ordered client path that must be traversed
//! contiguously, end to end, in either direction. A [`Forced`] set may also
//! pin depot edges: the listed clients must sit next to the depot in their
//! route.

mod construct;
mod exact;
mod improve;
mod units;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::EdgeKey;
use crate::instance::{Instance, DEPOT};
use crate::rng::derive_seed;

pub use construct::savings_construct;
pub use exact::{brute_force_optimal, MAX_EXACT_UNITS};
pub use improve::{improve, improve_traced, ruin_max};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("exact search supports at most {max} visit units, got {units}")]
    TooLarge { units: usize, max: usize },
    #[error("node {0} is not a client of this instance")]
    UnknownClient(usize),
    #[error("client {0} appears in more than one forced segment")]
    OverlappingSegments(usize),
    #[error("segment {0} must list at least two distinct clients")]
    ShortSegment(usize),
    #[error("segment {segment} demand {demand} exceeds capacity {capacity}")]
    SegmentOverCapacity {
        segment: usize,
        demand: u64,
        capacity: u32,
    },
    #[error("depot link at client {0} which is inside a segment")]
    InteriorDepotLink(usize),
    #[error("solution does not match the forced set: {0}")]
    Mismatch(&'static str),
    #[error("infeasible solution: {0}")]
    Infeasible(&'static str),
}

/// A client path that must stay contiguous in any route.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub clients: Vec<usize>,
    /// Cost of traversing the segment from one end to the other.
    pub cost: f64,
}

impl Segment {
    /// Segment whose cost is the sum of consecutive distances along `clients`.
    pub fn from_path(inst: &Instance, clients: Vec<usize>) -> Self {
        let cost = clients
            .windows(2)
            .map(|w| inst.distance(w[0], w[1]))
            .sum();
        Segment { clients, cost }
    }

    /// Segment with an explicit traversal cost, e.g. a contracted sequence.
    pub fn with_cost(clients: Vec<usize>, cost: f64) -> Self {
        Segment { clients, cost }
    }

    pub fn first(&self) -> usize {
        self.clients[0]
    }

    pub fn last(&self) -> usize {
        self.clients[self.clients.len() - 1]
    }

    pub fn demand(&self, inst: &Instance) -> u64 {
        self.clients.iter().map(|&c| u64::from(inst.demand(c))).sum()
    }
}

/// Structure every solution must contain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Forced {
    pub segments: Vec<Segment>,
    /// Clients whose edge to the depot must be traversed.
    pub depot_links: Vec<usize>,
}

impl Forced {
    pub fn none() -> Self {
        Forced::default()
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        Forced {
            segments,
            depot_links: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() && self.depot_links.is_empty()
    }

    pub fn validate(&self, inst: &Instance) -> Result<(), SolverError> {
        let n = inst.n();
        let mut seen = BTreeSet::new();
        let mut interior = BTreeSet::new();
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.clients.len() < 2 {
                return Err(SolverError::ShortSegment(k));
            }
            for (pos, &c) in seg.clients.iter().enumerate() {
                if c == DEPOT || c > n {
                    return Err(SolverError::UnknownClient(c));
                }
                if !seen.insert(c) {
                    return Err(SolverError::OverlappingSegments(c));
                }
                if pos != 0 && pos + 1 != seg.clients.len() {
                    interior.insert(c);
                }
            }
            let demand = seg.demand(inst);
            if demand > u64::from(inst.capacity()) {
                return Err(SolverError::SegmentOverCapacity {
                    segment: k,
                    demand,
                    capacity: inst.capacity(),
                });
            }
        }
        for &c in &self.depot_links {
            if c == DEPOT || c > n {
                return Err(SolverError::UnknownClient(c));
            }
            if interior.contains(&c) {
                return Err(SolverError::InteriorDepotLink(c));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visit {
    Client(usize),
    /// Index into [`Solution::segments`]; `reversed` walks it last-to-first.
    Segment { id: usize, reversed: bool },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub visits: Vec<Visit>,
}

impl Route {
    /// Client order with segments expanded.
    pub fn expand(&self, segments: &[Segment]) -> Vec<usize> {
        let mut out = Vec::new();
        for v in &self.visits {
            match *v {
                Visit::Client(c) => out.push(c),
                Visit::Segment { id, reversed } => {
                    let cl = &segments[id].clients;
                    if reversed {
                        out.extend(cl.iter().rev());
                    } else {
                        out.extend(cl.iter());
                    }
                }
            }
        }
        out
    }
}

/// Cost of one route: depot to first unit, unit legs, segment traversal
/// costs, last unit back to the depot. An empty route costs 0.
pub fn route_cost(inst: &Instance, route: &Route, segments: &[Segment]) -> f64 {
    route_cost_with(|a, b| inst.distance(a, b), route, segments)
}

pub(crate) fn route_cost_matrix(
    dist: &crate::instance::DistanceMatrix,
    route: &Route,
    segments: &[Segment],
) -> f64 {
    route_cost_with(|a, b| dist.get(a, b), route, segments)
}

fn route_cost_with(d: impl Fn(usize, usize) -> f64, route: &Route, segments: &[Segment]) -> f64 {
    if route.visits.is_empty() {
        return 0.0;
    }
    let mut cost = 0.0;
    let mut at = DEPOT;
    for v in &route.visits {
        let (entry, exit, inner) = match *v {
            Visit::Client(c) => (c, c, 0.0),
            Visit::Segment { id, reversed } => {
                let s = &segments[id];
                if reversed {
                    (s.last(), s.first(), s.cost)
                } else {
                    (s.first(), s.last(), s.cost)
                }
            }
        };
        cost += d(at, entry) + inner;
        at = exit;
    }
    cost + d(at, DEPOT)
}

/// A set of routes with its total cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<Route>,
    pub segments: Vec<Segment>,
    pub cost: f64,
}

impl Solution {
    /// Builds a segment-free solution from client sequences.
    pub fn from_client_routes(inst: &Instance, routes: Vec<Vec<usize>>) -> Self {
        let routes = routes
            .into_iter()
            .filter(|r| !r.is_empty())
            .map(|r| Route {
                visits: r.into_iter().map(Visit::Client).collect(),
            })
            .collect();
        let mut sol = Solution {
            routes,
            segments: Vec::new(),
            cost: 0.0,
        };
        sol.cost = sol.recompute_cost(inst);
        sol
    }

    pub fn recompute_cost(&self, inst: &Instance) -> f64 {
        self.routes
            .iter()
            .map(|r| route_cost(inst, r, &self.segments))
            .sum()
    }

    pub fn client_routes(&self) -> Vec<Vec<usize>> {
        self.routes.iter().map(|r| r.expand(&self.segments)).collect()
    }

    /// Same routes with every segment expanded into plain client visits.
    ///
    /// Only cost-preserving when segment costs are path costs.
    pub fn flattened(&self, inst: &Instance) -> Solution {
        Solution::from_client_routes(inst, self.client_routes())
    }

    /// Canonical undirected edges traversed, depot edges included, with
    /// duplicates collapsed.
    pub fn edges(&self) -> BTreeSet<EdgeKey> {
        let mut out = BTreeSet::new();
        for r in self.client_routes() {
            for e in route_edges(&r) {
                out.insert(e);
            }
        }
        out
    }

    /// Checks coverage, capacity, cost and the forced structure.
    pub fn check(&self, inst: &Instance, forced: &Forced) -> Result<(), SolverError> {
        let n = inst.n();
        let mut seen = alloc::vec![false; n + 1];
        let routes = self.client_routes();
        for r in &routes {
            let mut load = 0u64;
            for &c in r {
                if c == DEPOT || c > n {
                    return Err(SolverError::UnknownClient(c));
                }
                if core::mem::replace(&mut seen[c], true) {
                    return Err(SolverError::Infeasible("client visited twice"));
                }
                load += u64::from(inst.demand(c));
            }
            if load > u64::from(inst.capacity()) {
                return Err(SolverError::Infeasible("route load exceeds capacity"));
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(SolverError::Infeasible("client not visited"));
        }
        let recomputed = self.recompute_cost(inst);
        if (recomputed - self.cost).abs() > 1e-6 * recomputed.abs().max(1.0) {
            return Err(SolverError::Infeasible("cached cost is stale"));
        }
        if !forced_respected(&routes, forced) {
            return Err(SolverError::Infeasible("forced structure broken"));
        }
        Ok(())
    }
}

/// Edges of one client route, including both depot edges.
pub fn route_edges(route: &[usize]) -> impl Iterator<Item = EdgeKey> + '_ {
    let n = route.len();
    (0..=n).filter_map(move |k| {
        if n == 0 {
            return None;
        }
        let a = if k == 0 { DEPOT } else { route[k - 1] };
        let b = if k == n { DEPOT } else { route[k] };
        EdgeKey::new(a, b).ok()
    })
}

/// Whether expanded client routes keep every forced segment contiguous
/// (either direction) and every depot link adjacent to the depot.
pub fn forced_respected(routes: &[Vec<usize>], forced: &Forced) -> bool {
    for seg in &forced.segments {
        let found = routes.iter().any(|r| {
            let m = seg.clients.len();
            r.windows(m).any(|w| {
                w.iter().eq(seg.clients.iter()) || w.iter().eq(seg.clients.iter().rev())
            })
        });
        if !found {
            return false;
        }
    }
    forced.depot_links.iter().all(|&c| {
        routes
            .iter()
            .any(|r| r.first() == Some(&c) || r.last() == Some(&c))
    })
}

/// Restarts `construct + improve` `k` times and keeps the cheapest.
///
/// Run `r` improves with seed [`run_seed`]`(seed, r)`; ties keep the
/// earliest run.
pub fn best_of_k(
    inst: &Instance,
    forced: &Forced,
    k: usize,
    budget: u64,
    seed: u64,
) -> Result<Solution, SolverError> {
    let start = savings_construct(inst, forced)?;
    let mut best: Option<Solution> = None;
    for r in 0..k.max(1) {
        let sol = improve(inst, &start, forced, budget, run_seed(seed, r))?;
        if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one run"))
}

pub fn run_seed(seed: u64, run: usize) -> u64 {
    derive_seed(seed, run as u64)
}
