//! Edge datasets built from (original, modified) solution pairs.
//!
//! Every edge of the original solution becomes one sample. Its label says
//! whether the edge survives in the solution of the modified instance; its
//! features describe both endpoints before and after the demand change.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Examples;
use crate::instance::{Instance, Modified, DEPOT};
use crate::rng;
use crate::solver::Solution;

pub const N_FEATURES: usize = 16;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "x_i",
    "y_i",
    "x_j",
    "y_j",
    "cost",
    "demand_i_old",
    "demand_j_old",
    "demand_i_new",
    "demand_j_new",
    "depot_dist_i",
    "depot_dist_j",
    "is_depot_edge",
    "changed_i",
    "changed_j",
    "rank_j_from_i",
    "rank_i_from_j",
];

/// Columns holding 0/1 flags; never standardized.
pub const BOOLEAN_FEATURES: [usize; 3] = [11, 12, 13];

pub type Features = [f64; N_FEATURES];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("edge endpoints must differ (got {0}, {0})")]
    SelfLoop(usize),
    #[error("node {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("original and modified instances differ in size or coordinates")]
    Mismatch,
    #[error("no observations to build a dataset from")]
    Empty,
    #[error("split ratios must be non-negative and sum to 1")]
    Ratios,
}

/// Undirected edge with `i < j`. The depot (`0`) can only be `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    i: usize,
    j: usize,
}

impl EdgeKey {
    pub fn new(a: usize, b: usize) -> Result<Self, FeatureError> {
        match a.cmp(&b) {
            core::cmp::Ordering::Less => Ok(EdgeKey { i: a, j: b }),
            core::cmp::Ordering::Greater => Ok(EdgeKey { i: b, j: a }),
            core::cmp::Ordering::Equal => Err(FeatureError::SelfLoop(a)),
        }
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn is_depot_edge(&self) -> bool {
        self.i == DEPOT
    }

    pub fn touches(&self, node: usize) -> bool {
        self.i == node || self.j == node
    }

    pub fn other(&self, node: usize) -> usize {
        if self.i == node {
            self.j
        } else {
            self.i
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.i, self.j)
    }
}

/// Neighbor ranks over all nodes (depot included).
///
/// `rank(i, j) = 1` when `j` is `i`'s nearest node; ties are broken by
/// node id.
#[derive(Clone, Debug)]
pub struct NeighborRanks {
    nodes: usize,
    rank: Vec<u32>,
}

impl NeighborRanks {
    pub fn new(inst: &Instance) -> Self {
        let nodes = inst.node_count();
        let mut rank = vec![0u32; nodes * nodes];
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(nodes);
        for i in 0..nodes {
            order.clear();
            order.extend((0..nodes).filter(|&j| j != i).map(|j| (inst.distance(i, j), j)));
            order.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            for (r, &(_, j)) in order.iter().enumerate() {
                rank[i * nodes + j] = r as u32 + 1;
            }
        }
        NeighborRanks { nodes, rank }
    }

    /// Rank of `j` among the neighbors of `i`.
    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.rank[i * self.nodes + j]
    }
}

/// Precomputed state for extracting many edges of one instance pair.
pub struct FeatureContext<'a> {
    original: &'a Instance,
    modified: &'a Modified,
    ranks: NeighborRanks,
}

impl<'a> FeatureContext<'a> {
    pub fn new(original: &'a Instance, modified: &'a Modified) -> Result<Self, FeatureError> {
        let m = &modified.instance;
        if original.n() != m.n()
            || (0..original.node_count()).any(|k| original.point(k) != m.point(k))
        {
            return Err(FeatureError::Mismatch);
        }
        Ok(FeatureContext {
            original,
            modified,
            ranks: NeighborRanks::new(original),
        })
    }

    pub fn extract(&self, e: EdgeKey) -> Result<Features, FeatureError> {
        let nodes = self.original.node_count();
        for node in [e.i, e.j] {
            if node >= nodes {
                return Err(FeatureError::NodeOutOfRange { node, nodes });
            }
        }
        let (i, j) = (e.i, e.j);
        let po = self.original;
        let pm = &self.modified.instance;
        let (pi, pj) = (po.point(i), po.point(j));
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Ok([
            pi.x,
            pi.y,
            pj.x,
            pj.y,
            po.distance(i, j),
            f64::from(po.demand(i)),
            f64::from(po.demand(j)),
            f64::from(pm.demand(i)),
            f64::from(pm.demand(j)),
            po.distance(DEPOT, i),
            po.distance(DEPOT, j),
            flag(e.is_depot_edge()),
            flag(i != DEPOT && self.modified.is_changed(i)),
            flag(self.modified.is_changed(j)),
            f64::from(self.ranks.rank(i, j)),
            f64::from(self.ranks.rank(j, i)),
        ])
    }
}

/// Features of one edge. Builds neighbor ranks on every call; use
/// [`FeatureContext`] for bulk extraction.
pub fn extract_features(
    original: &Instance,
    modified: &Modified,
    a: usize,
    b: usize,
) -> Result<Features, FeatureError> {
    let key = EdgeKey::new(a, b)?;
    FeatureContext::new(original, modified)?.extract(key)
}

/// Label of every edge of `so`: 1 if `sm` also traverses it.
pub fn make_labels(so: &Solution, sm: &Solution) -> BTreeMap<EdgeKey, u8> {
    let kept = sm.edges();
    so.edges()
        .into_iter()
        .map(|e| (e, kept.contains(&e) as u8))
        .collect()
}

/// `|E(so) ∩ E(sm)| / |E(so)|`.
pub fn similarity(so: &Solution, sm: &Solution) -> f64 {
    let old = so.edges();
    if old.is_empty() {
        return 1.0;
    }
    let new = sm.edges();
    old.intersection(&new).count() as f64 / old.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub key: EdgeKey,
    pub features: Features,
    pub label: u8,
    /// Index of the observation this edge came from.
    pub source: usize,
}

/// One solved perturbation: `(P_o, S_o, P_m, S_m)`.
#[derive(Clone, Copy, Debug)]
pub struct Observation<'a> {
    pub original: &'a Instance,
    pub original_solution: &'a Solution,
    pub modified: &'a Modified,
    pub modified_solution: &'a Solution,
}

/// Raw samples of one observation, ordered by edge key.
pub fn observation_samples(obs: &Observation<'_>, source: usize) -> Result<Vec<EdgeSample>, FeatureError> {
    let ctx = FeatureContext::new(obs.original, obs.modified)?;
    make_labels(obs.original_solution, obs.modified_solution)
        .into_iter()
        .map(|(key, label)| {
            Ok(EdgeSample {
                key,
                features: ctx.extract(key)?,
                label,
                source,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    /// Observations per split for `n` observations.
    ///
    /// Train and validation take `floor(ratio·n)`, the test split takes the
    /// remainder. Train always gets at least one observation.
    pub fn counts(&self, n: usize) -> Result<[usize; 3], FeatureError> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || libm::fabs(r.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(FeatureError::Ratios);
        }
        let train = (libm::floor(self.train * n as f64) as usize).clamp(1.min(n), n);
        let val = (libm::floor(self.val * n as f64) as usize).min(n - train);
        Ok([train, val, n - train - val])
    }
}

/// Per-feature standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    /// Identity scaling.
    pub fn identity() -> Self {
        Scaler {
            means: vec![0.0; N_FEATURES],
            stds: vec![1.0; N_FEATURES],
        }
    }

    /// Population mean and standard deviation per column. Boolean columns
    /// get `(0, 1)`; constant columns get std 0 and pass through.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a Features> + Clone) -> Self {
        let count = rows.clone().count();
        let mut means = vec![0.0; N_FEATURES];
        let mut stds = vec![1.0; N_FEATURES];
        if count == 0 {
            return Scaler { means, stds };
        }
        for f in 0..N_FEATURES {
            if BOOLEAN_FEATURES.contains(&f) {
                continue;
            }
            let mean = rows.clone().map(|r| r[f]).sum::<f64>() / count as f64;
            let var = rows.clone().map(|r| (r[f] - mean) * (r[f] - mean)).sum::<f64>() / count as f64;
            means[f] = mean;
            stds[f] = libm::sqrt(var);
        }
        Scaler { means, stds }
    }

    pub fn is_passthrough(&self, f: usize) -> bool {
        BOOLEAN_FEATURES.contains(&f) || self.stds[f].is_nan() || self.stds[f] <= 1e-12
    }

    pub fn transform(&self, x: &Features) -> Features {
        let mut out = *x;
        for (f, v) in out.iter_mut().enumerate() {
            if !self.is_passthrough(f) {
                *v = (*v - self.means[f]) / self.stds[f];
            }
        }
        out
    }
}

/// Standardized samples with an instance-level split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<EdgeSample>,
    /// Split of each observation, indexed by `EdgeSample::source`.
    pub assignment: Vec<Split>,
    pub scaler: Scaler,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn split_of(&self, sample: &EdgeSample) -> Split {
        self.assignment[sample.source]
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = &EdgeSample> + '_ {
        self.samples.iter().filter(move |s| self.split_of(s) == split)
    }

    pub fn examples(&self, split: Split) -> Examples {
        let mut ex = Examples::new(N_FEATURES);
        for s in self.samples_in(split) {
            ex.push(&s.features, s.label);
        }
        ex
    }
}

/// Shuffles observations with `seed`, splits them by observation and
/// standardizes every sample with a scaler fitted on the training split.
pub fn build_dataset(
    observations: &[Observation<'_>],
    ratios: SplitRatios,
    seed: u64,
) -> Result<Dataset, FeatureError> {
    if observations.is_empty() {
        return Err(FeatureError::Empty);
    }
    let n = observations.len();
    let [n_train, n_val, _] = ratios.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let mut assignment = vec![Split::Test; n];
    for (pos, &obs) in order.iter().enumerate() {
        assignment[obs] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let mut samples = Vec::new();
    for (k, obs) in observations.iter().enumerate() {
        samples.extend(observation_samples(obs, k)?);
    }
    let scaler = Scaler::fit(
        samples
            .iter()
            .filter(|s| assignment[s.source] == Split::Train)
            .map(|s| &s.features),
    );
    for s in samples.iter_mut() {
        s.features = scaler.transform(&s.features);
    }

    let mut warnings = Vec::new();
    for split in [Split::Val, Split::Test] {
        if !assignment.contains(&split) {
            warnings.push(alloc::format!("{} split is empty", split.name()));
        }
    }
    Ok(Dataset {
        samples,
        assignment,
        scaler,
        warnings,
    })
}

/// Canonical keys of an edge set given as node pairs.
pub fn canonical_edges(pairs: impl IntoIterator<Item = (usize, usize)>) -> BTreeSet<EdgeKey> {
    pairs
        .into_iter()
        .filter_map(|(a, b)| EdgeKey::new(a, b).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{perturb, Client, IntervalClass, Point, Rounding, Scenario};
    use rand::Rng as _;

    fn instance(n: usize, seed: u64) -> Instance {
        let mut r = rng::rng(seed);
        let clients = (0..n)
            .map(|_| Client {
                pos: Point::new(r.gen_range(0..100) as f64, r.gen_range(0..100) as f64),
                demand: r.gen_range(1..=10),
            })
            .collect();
        Instance::new("f", 30, Point::new(50.0, 50.0), clients, Rounding::RoundedEuclidean).unwrap()
    }

    #[test]
    fn edge_key_canonical() {
        let e = EdgeKey::new(5, 2).unwrap();
        assert_eq!((e.i(), e.j()), (2, 5));
        assert_eq!(EdgeKey::new(2, 5).unwrap(), e);
        assert_eq!(EdgeKey::new(3, 3), Err(FeatureError::SelfLoop(3)));
        assert!(EdgeKey::new(0, 4).unwrap().is_depot_edge());
    }

    #[test]
    fn depot_edge_features() {
        let po = instance(10, 1);
        let pm = perturb(&po, &Scenario::new(30, IntervalClass::Large, 4, 2).unwrap());
        let x = extract_features(&po, &pm, 4, 0).unwrap();
        assert_eq!(x[11], 1.0);
        assert_eq!(x[5], 0.0);
        assert_eq!(x[7], 0.0);
        assert_eq!(x[12], 0.0);
        assert_eq!(x[9], 0.0);
        assert_eq!(x[4], po.distance(0, 4));
        assert_eq!(x[10], po.distance(0, 4));
        assert_eq!(x[0], po.depot().x);
    }

    #[test]
    fn unperturbed_pair() {
        let po = instance(10, 1);
        let pm = Modified::unchanged(po.clone());
        let x = extract_features(&po, &pm, 3, 7).unwrap();
        assert_eq!(x[12], 0.0);
        assert_eq!(x[13], 0.0);
        assert_eq!(x[5], x[7]);
        assert_eq!(x[6], x[8]);
        assert_eq!(x, extract_features(&po, &pm, 7, 3).unwrap());
    }

    #[test]
    fn nearest_neighbor_rank_is_one() {
        let clients = [(10.0, 0.0), (11.0, 0.0), (30.0, 0.0)]
            .iter()
            .map(|&(x, y)| Client { pos: Point::new(x, y), demand: 1 })
            .collect();
        let po = Instance::new("r", 5, Point::new(0.0, 0.0), clients, Rounding::RoundedEuclidean).unwrap();
        let pm = Modified::unchanged(po.clone());
        let x = extract_features(&po, &pm, 1, 2).unwrap();
        assert_eq!(x[14], 1.0);
        assert_eq!(x[15], 1.0);
        let x = extract_features(&po, &pm, 1, 3).unwrap();
        // node 3 from node 1: behind 2 (d=1) and depot (d=10)
        assert_eq!(x[14], 3.0);
        // node 1 from node 3: behind 2 (d=19)
        assert_eq!(x[15], 2.0);
    }

    #[test]
    fn rank_ties_by_id() {
        let clients = [(10.0, 0.0), (-10.0, 0.0)]
            .iter()
            .map(|&(x, y)| Client { pos: Point::new(x, y), demand: 1 })
            .collect();
        let po = Instance::new("r", 5, Point::new(0.0, 0.0), clients, Rounding::RoundedEuclidean).unwrap();
        let ranks = NeighborRanks::new(&po);
        assert_eq!(ranks.rank(0, 1), 1);
        assert_eq!(ranks.rank(0, 2), 2);
    }

    #[test]
    fn bad_edges_rejected() {
        let po = instance(5, 1);
        let pm = Modified::unchanged(po.clone());
        assert_eq!(extract_features(&po, &pm, 2, 2), Err(FeatureError::SelfLoop(2)));
        assert_eq!(
            extract_features(&po, &pm, 2, 9),
            Err(FeatureError::NodeOutOfRange { node: 9, nodes: 6 })
        );
    }

    #[test]
    fn labels_and_similarity() {
        let po = instance(6, 3);
        let a = Solution::from_client_routes(&po, vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let b = Solution::from_client_routes(&po, vec![vec![1, 2], vec![3, 4, 5, 6]]);
        let all_ones = make_labels(&a, &a);
        assert!(all_ones.values().all(|&l| l == 1));
        assert_eq!(similarity(&a, &a), 1.0);
        let labels = make_labels(&a, &b);
        // E(a) = 01 12 23 03 04 45 56 06 ; E(b) = 01 12 02 03 34 45 56 06
        let ones: Vec<_> = labels.iter().filter(|(_, &l)| l == 1).map(|(k, _)| (k.i(), k.j())).collect();
        assert_eq!(ones, vec![(0, 1), (0, 3), (0, 6), (1, 2), (4, 5), (5, 6)]);
        assert_eq!(similarity(&a, &b), 6.0 / 8.0);
        let c = Solution::from_client_routes(&po, vec![vec![1, 3, 5, 2, 4, 6]]);
        let d = Solution::from_client_routes(&po, vec![vec![2, 1, 4], vec![3, 6, 5]]);
        // no overlap: E(c) = 01 13 35 25 24 46 06 ; E(d) = 02 12 14 04 03 36 56 05
        assert_eq!(similarity(&c, &d), 0.0);
        assert!(make_labels(&c, &d).values().all(|&l| l == 0));
    }

    #[test]
    fn split_counts_floor_with_test_remainder() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(95).unwrap(), [66, 14, 15]);
        assert_eq!(r.counts(1).unwrap(), [1, 0, 0]);
        assert_eq!(r.counts(10).unwrap(), [7, 1, 2]);
        assert!(SplitRatios { train: 0.5, val: 0.2, test: 0.2 }.counts(10).is_err());
    }

    #[test]
    fn scaler_skips_booleans_and_constants() {
        let mut a = [1.0; N_FEATURES];
        let mut b = [3.0; N_FEATURES];
        a[11] = 0.0;
        b[11] = 1.0;
        a[2] = 5.0;
        b[2] = 5.0;
        let s = Scaler::fit([a, b].iter());
        assert_eq!(s.means[0], 2.0);
        assert_eq!(s.stds[0], 1.0);
        let t = s.transform(&b);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[11], 1.0);
        assert_eq!(t[2], 5.0);
        assert!(s.is_passthrough(2));
    }
}
