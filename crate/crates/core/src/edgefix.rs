//! Learned edge fixing: turn predicted edge survivals into forced structure,
//! repair capacity violations, contract fixed paths and re-solve.
//!
//! The fixed graph holds the edges of the old solution predicted to survive.
//! After [`sanitize`] it is a set of vertex-disjoint client paths, each
//! optionally attached to the depot at its ends. A maximal client path of at
//! least two clients is a *sequence*. [`resolve_infeasibility`] unfixes
//! edges until every sequence fits in one vehicle, and [`contract`] replaces
//! each sequence of three or more clients by a single edge between its ends
//! that carries the path cost, moving the interior demand onto the first end.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Network;
use crate::features::{EdgeKey, FeatureContext, FeatureError, Scaler};
use crate::instance::{Client, Instance, InstanceError, DEPOT};
use crate::solver::{self, route_edges, Forced, Segment, Solution, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EdgeFixError {
    #[error("edge {0} predicted twice")]
    DuplicateEdge(EdgeKey),
    #[error("fixed graph is not a union of simple client paths")]
    NotSanitized,
    #[error("sequence starting at {first} needs {demand} > capacity {capacity}")]
    InfeasibleSequence {
        first: usize,
        demand: u64,
        capacity: u32,
    },
    #[error("edge {0} references a node outside the instance")]
    UnknownNode(EdgeKey),
    #[error("contracted cost {contracted} differs from expanded cost {expanded}")]
    CostIdentity { contracted: f64, expanded: f64 },
    #[error("fixed edge {0} is not traversed by the solution")]
    FixNotHonored(EdgeKey),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Model output for one edge of the old solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: EdgeKey,
    pub fixed: u8,
    pub prob: f64,
}

/// Fixed edges with their predicted survival probabilities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedGraph {
    edges: BTreeMap<EdgeKey, f64>,
}

impl FixedGraph {
    pub fn new() -> Self {
        FixedGraph::default()
    }

    /// Keeps the edges predicted as fixed.
    pub fn from_predictions(preds: &[Prediction]) -> Result<Self, EdgeFixError> {
        let mut seen = BTreeSet::new();
        let mut edges = BTreeMap::new();
        for p in preds {
            if !seen.insert(p.key) {
                return Err(EdgeFixError::DuplicateEdge(p.key));
            }
            if p.fixed == 1 {
                edges.insert(p.key, p.prob);
            }
        }
        Ok(FixedGraph { edges })
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (EdgeKey, f64)>) -> Self {
        FixedGraph {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: &EdgeKey) -> bool {
        self.edges.contains_key(e)
    }

    pub fn prob(&self, e: &EdgeKey) -> Option<f64> {
        self.edges.get(e).copied()
    }

    pub fn remove(&mut self, e: &EdgeKey) -> Option<f64> {
        self.edges.remove(e)
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeKey, f64)> + '_ {
        self.edges.iter().map(|(k, p)| (*k, *p))
    }

    pub fn keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.edges.keys().copied()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.keys().filter(|e| e.touches(node)).count()
    }

    /// Adjacency over client–client edges only.
    fn client_adjacency(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in self.edges.keys().filter(|e| !e.is_depot_edge()) {
            adj.entry(e.i()).or_default().push(e.j());
            adj.entry(e.j()).or_default().push(e.i());
        }
        adj
    }

    /// Clients whose depot edge is fixed.
    pub fn depot_links(&self) -> Vec<usize> {
        self.edges
            .keys()
            .filter(|e| e.is_depot_edge())
            .map(|e| e.j())
            .collect()
    }

    /// Whether every client has degree ≤ 2 and no cycle avoids the depot.
    pub fn is_sanitized(&self) -> bool {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for e in self.edges.keys() {
            for v in [e.i(), e.j()] {
                if v != DEPOT {
                    *degree.entry(v).or_default() += 1;
                }
            }
        }
        degree.values().all(|&d| d <= 2) && client_cycles(&self.client_adjacency()).is_empty()
    }

    /// Maximal client paths with at least two clients, each listed from its
    /// smaller-id end, ordered by first node. Requires a sanitized graph.
    pub fn sequences(&self, inst: &Instance) -> Result<Vec<Sequence>, EdgeFixError> {
        if !self.is_sanitized() {
            return Err(EdgeFixError::NotSanitized);
        }
        let adj = self.client_adjacency();
        let mut visited = BTreeSet::new();
        let mut out = Vec::new();
        for (&start, nbrs) in &adj {
            if nbrs.len() != 1 || visited.contains(&start) {
                continue;
            }
            let mut nodes = vec![start];
            visited.insert(start);
            let (mut prev, mut at) = (start, nbrs[0]);
            loop {
                nodes.push(at);
                visited.insert(at);
                match adj[&at].iter().find(|&&v| v != prev) {
                    Some(&next) => {
                        prev = at;
                        at = next;
                    }
                    None => break,
                }
            }
            out.push(Sequence::new(nodes, self, inst));
        }
        out.sort_by_key(|s| s.nodes[0]);
        Ok(out)
    }
}

/// Client cycles as edge lists (connected components where every node has
/// two client neighbors).
fn client_cycles(adj: &BTreeMap<usize, Vec<usize>>) -> Vec<Vec<EdgeKey>> {
    let mut seen = BTreeSet::new();
    let mut cycles = Vec::new();
    for &start in adj.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen.insert(start);
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in &adj[&v] {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        let edge_count: usize = comp.iter().map(|v| adj[v].len()).sum::<usize>() / 2;
        if edge_count >= comp.len() {
            let mut edges: Vec<EdgeKey> = comp
                .iter()
                .flat_map(|&v| adj[&v].iter().filter_map(move |&w| EdgeKey::new(v, w).ok()))
                .collect();
            edges.sort();
            edges.dedup();
            cycles.push(edges);
        }
    }
    cycles
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub nodes: Vec<usize>,
    pub demand: u64,
    /// Probability of each consecutive edge.
    pub probs: Vec<f64>,
}

impl Sequence {
    fn new(nodes: Vec<usize>, g: &FixedGraph, inst: &Instance) -> Self {
        let demand = nodes.iter().map(|&v| u64::from(inst.demand(v))).sum();
        let probs = nodes
            .windows(2)
            .map(|w| {
                let key = EdgeKey::new(w[0], w[1]).expect("path edges join distinct nodes");
                g.prob(&key).expect("path edge is fixed")
            })
            .collect();
        Sequence {
            nodes,
            demand,
            probs,
        }
    }

    pub fn edges(&self) -> Vec<EdgeKey> {
        self.nodes
            .windows(2)
            .map(|w| EdgeKey::new(w[0], w[1]).expect("distinct"))
            .collect()
    }

    /// Lowest-probability edge, ties by key.
    pub fn weakest_edge(&self) -> EdgeKey {
        self.edges()
            .into_iter()
            .zip(&self.probs)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(e, _)| e)
            .expect("sequence has at least one edge")
    }
}

fn weakest<'a>(candidates: impl Iterator<Item = (EdgeKey, f64)> + 'a) -> Option<EdgeKey> {
    candidates
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(e, _)| e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Degree,
    Cycle,
    Capacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub edge: EdgeKey,
    pub prob: f64,
    pub reason: RemovalReason,
}

/// Reduces the fixed graph to disjoint client paths.
///
/// While some client has more than two fixed edges, its lowest-probability
/// edge is unfixed; then every client-only cycle loses its lowest-probability
/// edge. Ties go to the smaller edge key. The depot may keep any degree.
pub fn sanitize(g: &FixedGraph) -> (FixedGraph, Vec<Removal>) {
    let mut g = g.clone();
    let mut log = Vec::new();
    loop {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for e in g.edges.keys() {
            for v in [e.i(), e.j()] {
                if v != DEPOT {
                    *degree.entry(v).or_default() += 1;
                }
            }
        }
        let Some((&node, _)) = degree.iter().find(|(_, &d)| d > 2) else {
            break;
        };
        let edge = weakest(g.edges().filter(|(e, _)| e.touches(node))).expect("node has edges");
        let prob = g.remove(&edge).expect("edge present");
        log.push(Removal {
            edge,
            prob,
            reason: RemovalReason::Degree,
        });
    }
    loop {
        let cycles = client_cycles(&g.client_adjacency());
        if cycles.is_empty() {
            break;
        }
        for cycle in cycles {
            let edge = weakest(cycle.iter().map(|e| (*e, g.edges[e]))).expect("cycle has edges");
            let prob = g.remove(&edge).expect("edge present");
            log.push(Removal {
                edge,
                prob,
                reason: RemovalReason::Cycle,
            });
        }
    }
    (g, log)
}

/// Edges removed by [`resolve_infeasibility`], one list per pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub passes: Vec<Vec<EdgeKey>>,
}

impl RepairTrace {
    pub fn removed(&self) -> usize {
        self.passes.iter().map(Vec::len).sum()
    }
}

/// Unfixes edges until every sequence fits in one vehicle.
///
/// Each pass computes the sequences of the current graph and, for every
/// sequence whose total demand exceeds `Q`, unfixes its lowest-probability
/// edge. Passes repeat until one finds nothing to remove. Every productive
/// pass removes at least one edge, so there are at most `|E|` of them.
pub fn resolve_infeasibility(
    g: &FixedGraph,
    inst: &Instance,
) -> Result<(FixedGraph, RepairTrace), EdgeFixError> {
    let mut g = g.clone();
    let mut trace = RepairTrace::default();
    let q = u64::from(inst.capacity());
    loop {
        let mut removed = Vec::new();
        for seq in g.sequences(inst)? {
            if seq.demand > q {
                removed.push(seq.weakest_edge());
            }
        }
        if removed.is_empty() {
            break;
        }
        for e in &removed {
            g.remove(e);
        }
        trace.passes.push(removed);
    }
    Ok((g, trace))
}

/// A reduced instance in which fixed sequences are forced segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractedInstance {
    pub reduced: Instance,
    /// Segments and depot links in reduced ids.
    pub forced: Forced,
    /// Original id of each reduced node (`original_of[0] == 0`).
    pub original_of: Vec<usize>,
    /// Original client path behind each forced segment.
    pub segment_paths: Vec<Vec<usize>>,
    /// Interior clients absorbed into contracted sequences.
    pub removed: Vec<usize>,
}

impl ContractedInstance {
    pub fn nodes_before(&self) -> usize {
        self.original_of.len() + self.removed.len()
    }

    pub fn nodes_after(&self) -> usize {
        self.original_of.len()
    }

    /// Visit units of the reduced problem: free clients plus segments.
    pub fn unit_count(&self) -> usize {
        let in_segments: usize = self.forced.segments.iter().map(|s| s.clients.len()).sum();
        self.reduced.n() - in_segments + self.forced.segments.len()
    }

    /// Routes of a reduced solution in original client ids.
    pub fn expand(&self, sol: &Solution) -> Vec<Vec<usize>> {
        sol.routes
            .iter()
            .map(|r| {
                let mut out = Vec::new();
                for v in &r.visits {
                    match *v {
                        solver::Visit::Client(c) => out.push(self.original_of[c]),
                        solver::Visit::Segment { id, reversed } => {
                            let path = &self.segment_paths[id];
                            if reversed {
                                out.extend(path.iter().rev());
                            } else {
                                out.extend(path.iter());
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// Builds the reduced instance for a sanitized, capacity-feasible graph.
///
/// Every sequence `v1 … vk` with `k ≥ 3` keeps only its ends, joined by a
/// forced segment whose cost is the path cost; `v1` takes over the demand of
/// the interior clients. Two-client sequences become forced segments over
/// the fixed edge. Fixed depot edges become depot links.
pub fn contract(inst: &Instance, g: &FixedGraph) -> Result<ContractedInstance, EdgeFixError> {
    let n = inst.n();
    for e in g.keys() {
        if e.j() > n {
            return Err(EdgeFixError::UnknownNode(e));
        }
    }
    let sequences = g.sequences(inst)?;
    let mut absorbed = vec![0u32; n + 1];
    let mut removed_flag = vec![false; n + 1];
    for seq in &sequences {
        if seq.demand > u64::from(inst.capacity()) {
            return Err(EdgeFixError::InfeasibleSequence {
                first: seq.nodes[0],
                demand: seq.demand,
                capacity: inst.capacity(),
            });
        }
        if seq.nodes.len() >= 3 {
            let interior = &seq.nodes[1..seq.nodes.len() - 1];
            for &v in interior {
                removed_flag[v] = true;
                absorbed[seq.nodes[0]] += inst.demand(v);
            }
        }
    }

    let mut original_of = vec![DEPOT];
    let mut reduced_of = vec![usize::MAX; n + 1];
    reduced_of[DEPOT] = DEPOT;
    let mut clients = Vec::new();
    for c in 1..=n {
        if removed_flag[c] {
            continue;
        }
        reduced_of[c] = original_of.len();
        original_of.push(c);
        clients.push(Client {
            pos: inst.point(c),
            demand: inst.demand(c) + absorbed[c],
        });
    }
    let reduced = Instance::new(inst.name(), inst.capacity(), inst.depot(), clients, inst.rounding())?;

    let mut segments = Vec::with_capacity(sequences.len());
    let mut segment_paths = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        let (a, b) = (seq.nodes[0], seq.nodes[seq.nodes.len() - 1]);
        let cost: f64 = seq.nodes.windows(2).map(|w| inst.distance(w[0], w[1])).sum();
        segments.push(Segment::with_cost(vec![reduced_of[a], reduced_of[b]], cost));
        segment_paths.push(seq.nodes.clone());
    }
    let depot_links = g.depot_links().into_iter().map(|c| reduced_of[c]).collect();
    let removed = (1..=n).filter(|&c| removed_flag[c]).collect();
    Ok(ContractedInstance {
        reduced,
        forced: Forced {
            segments,
            depot_links,
        },
        original_of,
        segment_paths,
        removed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Restarts of construct + improve.
    pub k: usize,
    /// Ruin-and-recreate iterations per restart.
    pub budget: u64,
    pub seed: u64,
    /// Solve exactly when the reduced problem has at most this many visit
    /// units (0 disables).
    pub exact_max_units: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            k: 3,
            budget: 5_000,
            seed: 0,
            exact_max_units: 0,
        }
    }
}

/// Solves `inst` under `forced`, exactly when small enough.
pub fn solve(inst: &Instance, forced: &Forced, cfg: &SolveConfig) -> Result<Solution, SolverError> {
    let in_segments: usize = forced.segments.iter().map(|s| s.clients.len()).sum();
    let units = inst.n() - in_segments + forced.segments.len();
    if units <= cfg.exact_max_units.min(solver::MAX_EXACT_UNITS) {
        solver::brute_force_optimal(inst, forced)
    } else {
        solver::best_of_k(inst, forced, cfg.k, cfg.budget, cfg.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixDiagnostics {
    /// Edges predicted as fixed.
    pub predicted_count: usize,
    /// Edges still fixed after repair.
    pub fixed_count: usize,
    /// Edges unfixed by sanitizing and capacity repair.
    pub repaired_count: usize,
    pub repair_passes: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub units: usize,
    pub exact: bool,
    pub cost: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixOutcome {
    /// Solution of the full instance.
    pub solution: Solution,
    /// Fixed edges after repair; all of them are traversed by `solution`.
    pub fixed: FixedGraph,
    pub removals: Vec<Removal>,
    pub diagnostics: FixDiagnostics,
}

/// Sanitize, repair, contract, solve the reduced problem and expand.
///
/// Checks that the expanded solution costs exactly what the reduced one
/// does and that every remaining fixed edge is traversed.
pub fn fix_and_solve(pm: &Instance, g: &FixedGraph, cfg: &SolveConfig) -> Result<FixOutcome, EdgeFixError> {
    let (clean, mut removals) = sanitize(g);
    let (fixed, trace) = resolve_infeasibility(&clean, pm)?;
    for pass in &trace.passes {
        for &edge in pass {
            removals.push(Removal {
                edge,
                prob: clean.prob(&edge).unwrap_or(f64::NAN),
                reason: RemovalReason::Capacity,
            });
        }
    }
    let contracted = contract(pm, &fixed)?;
    let units = contracted.unit_count();
    let exact = units <= cfg.exact_max_units.min(solver::MAX_EXACT_UNITS);
    let reduced_sol = solve(&contracted.reduced, &contracted.forced, cfg)?;
    let solution = Solution::from_client_routes(pm, contracted.expand(&reduced_sol));

    let tolerance = match pm.rounding() {
        crate::instance::Rounding::RoundedEuclidean => 0.0,
        crate::instance::Rounding::ExactEuclidean => 1e-9 * solution.cost.max(1.0),
    };
    if (solution.cost - reduced_sol.cost).abs() > tolerance {
        return Err(EdgeFixError::CostIdentity {
            contracted: reduced_sol.cost,
            expanded: solution.cost,
        });
    }
    for e in fixed.keys() {
        if edge_flow(&solution, e) == 0 {
            return Err(EdgeFixError::FixNotHonored(e));
        }
    }

    let diagnostics = FixDiagnostics {
        predicted_count: g.len(),
        fixed_count: fixed.len(),
        repaired_count: removals.len(),
        repair_passes: trace.passes.len(),
        nodes_before: contracted.nodes_before(),
        nodes_after: contracted.nodes_after(),
        units,
        exact,
        cost: solution.cost,
        seed: cfg.seed,
    };
    Ok(FixOutcome {
        solution,
        fixed,
        removals,
        diagnostics,
    })
}

/// Number of times `e` is traversed (2 only for an out-and-back depot edge).
pub fn edge_flow(sol: &Solution, e: EdgeKey) -> u8 {
    sol.client_routes()
        .iter()
        .map(|r| route_edges(r).filter(|k| *k == e).count())
        .sum::<usize>() as u8
}

/// Model predictions for every edge of the old solution.
pub fn predict_edges(
    net: &Network,
    scaler: &Scaler,
    original: &Instance,
    original_solution: &Solution,
    modified: &crate::instance::Modified,
) -> Result<Vec<Prediction>, EdgeFixError> {
    let ctx = FeatureContext::new(original, modified)?;
    original_solution
        .edges()
        .into_iter()
        .map(|key| {
            let x = scaler.transform(&ctx.extract(key)?);
            let prob = net.predict_proba(&x);
            Ok(Prediction {
                key,
                fixed: (prob > 0.5) as u8,
                prob,
            })
        })
        .collect()
}
