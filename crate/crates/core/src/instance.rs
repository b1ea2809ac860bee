//! Instance data model, distances and the demand-perturbation scenarios.
//!
//! Node ids are dense: the depot is `0` and clients are `1..=n`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const DEPOT: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// How Euclidean distances are turned into arc costs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// TSPLIB `EUC_2D`: nearest integer, halves rounded up.
    #[default]
    RoundedEuclidean,
    ExactEuclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub pos: Point,
    pub demand: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("vehicle capacity must be positive")]
    ZeroCapacity,
    #[error("instance has no clients")]
    NoClients,
    #[error("client {client}: demand {demand} outside [1, {capacity}]")]
    DemandOutOfRange {
        client: usize,
        demand: u32,
        capacity: u32,
    },
    #[error("node {node}: non-finite coordinate")]
    NonFiniteCoordinate { node: usize },
    #[error("expected {expected} demands, got {got}")]
    DemandCount { expected: usize, got: usize },
}

/// A CVRP instance: one depot, `n` clients with positive demands and a
/// homogeneous vehicle capacity `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    name: String,
    capacity: u32,
    depot: Point,
    clients: Vec<Client>,
    rounding: Rounding,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        capacity: u32,
        depot: Point,
        clients: Vec<Client>,
        rounding: Rounding,
    ) -> Result<Self, InstanceError> {
        if capacity == 0 {
            return Err(InstanceError::ZeroCapacity);
        }
        if clients.is_empty() {
            return Err(InstanceError::NoClients);
        }
        if !depot.x.is_finite() || !depot.y.is_finite() {
            return Err(InstanceError::NonFiniteCoordinate { node: DEPOT });
        }
        for (k, c) in clients.iter().enumerate() {
            if !c.pos.x.is_finite() || !c.pos.y.is_finite() {
                return Err(InstanceError::NonFiniteCoordinate { node: k + 1 });
            }
            if c.demand == 0 || c.demand > capacity {
                return Err(InstanceError::DemandOutOfRange {
                    client: k + 1,
                    demand: c.demand,
                    capacity,
                });
            }
        }
        Ok(Instance {
            name: name.into(),
            capacity,
            depot,
            clients,
            rounding,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn depot(&self) -> Point {
        self.depot
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    /// Number of clients `n`.
    pub fn n(&self) -> usize {
        self.clients.len()
    }

    /// Number of nodes including the depot.
    pub fn node_count(&self) -> usize {
        self.clients.len() + 1
    }

    /// Panics if `node` is out of range.
    pub fn point(&self, node: usize) -> Point {
        if node == DEPOT {
            self.depot
        } else {
            self.clients[node - 1].pos
        }
    }

    /// Demand of `node`; the depot has demand 0.
    pub fn demand(&self, node: usize) -> u32 {
        if node == DEPOT {
            0
        } else {
            self.clients[node - 1].demand
        }
    }

    pub fn demands(&self) -> impl Iterator<Item = u32> + '_ {
        self.clients.iter().map(|c| c.demand)
    }

    pub fn total_demand(&self) -> u64 {
        self.demands().map(u64::from).sum()
    }

    /// Arc cost between two nodes. Panics on out-of-range ids.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        euclidean(self.point(a), self.point(b), self.rounding)
    }

    /// Same coordinates and capacity, new client demands.
    pub fn with_demands(&self, demands: Vec<u32>) -> Result<Self, InstanceError> {
        if demands.len() != self.n() {
            return Err(InstanceError::DemandCount {
                expected: self.n(),
                got: demands.len(),
            });
        }
        let clients = self
            .clients
            .iter()
            .zip(demands)
            .map(|(c, demand)| Client { pos: c.pos, demand })
            .collect();
        Instance::new(
            self.name.clone(),
            self.capacity,
            self.depot,
            clients,
            self.rounding,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    /// Dense `(n+1)²` cost matrix.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let size = self.node_count();
        let mut costs = Vec::with_capacity(size * size);
        for a in 0..size {
            for b in 0..size {
                costs.push(self.distance(a, b));
            }
        }
        DistanceMatrix { size, costs }
    }
}

pub fn euclidean(a: Point, b: Point, rounding: Rounding) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let d = libm::sqrt(dx * dx + dy * dy);
    match rounding {
        Rounding::RoundedEuclidean => libm::floor(d + 0.5),
        Rounding::ExactEuclidean => d,
    }
}

#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    size: usize,
    costs: Vec<f64>,
}

impl DistanceMatrix {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.costs[a * self.size + b]
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Width class of the demand redraw interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntervalClass {
    #[serde(rename = "S")]
    Small,
    #[serde(rename = "M")]
    Medium,
    #[serde(rename = "L")]
    Large,
}

impl IntervalClass {
    pub const ALL: [IntervalClass; 3] = [Self::Small, Self::Medium, Self::Large];

    pub fn letter(self) -> char {
        match self {
            Self::Small => 'S',
            Self::Medium => 'M',
            Self::Large => 'L',
        }
    }
}

impl FromStr for IntervalClass {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" | "small" | "Small" => Ok(Self::Small),
            "M" | "m" | "medium" | "Medium" => Ok(Self::Medium),
            "L" | "l" | "large" | "Large" => Ok(Self::Large),
            _ => Err(ScenarioError::UnknownClass(s.into())),
        }
    }
}

/// How an instance's demands were drawn, as tagged in the X benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemandDistribution {
    #[serde(rename = "U1_100")]
    Range1To100,
    #[serde(rename = "U50_100")]
    Range50To100,
    #[serde(rename = "U5_10")]
    Range5To10,
    #[serde(rename = "Quadrant")]
    Quadrant,
    #[serde(rename = "U1_10")]
    Range1To10,
}

impl DemandDistribution {
    /// Half-width `Δd` of the redraw interval for this distribution.
    pub fn delta(self, class: IntervalClass) -> u32 {
        let (s, m, l) = match self {
            Self::Range1To100 | Self::Range50To100 | Self::Quadrant => (5, 10, 15),
            Self::Range5To10 => (1, 2, 3),
            Self::Range1To10 => (2, 3, 4),
        };
        match class {
            IntervalClass::Small => s,
            IntervalClass::Medium => m,
            IntervalClass::Large => l,
        }
    }
}

impl FromStr for DemandDistribution {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "U1_100" | "[1-100]" | "1-100" => Ok(Self::Range1To100),
            "U50_100" | "[50-100]" | "50-100" => Ok(Self::Range50To100),
            "U5_10" | "[5-10]" | "5-10" => Ok(Self::Range5To10),
            "Quadrant" | "quadrant" | "Q" => Ok(Self::Quadrant),
            "U1_10" | "[1-10]" | "1-10" => Ok(Self::Range1To10),
            _ => Err(ScenarioError::UnknownDistribution(s.into())),
        }
    }
}

/// Free-function form of [`DemandDistribution::delta`].
pub fn resolve_delta(tag: DemandDistribution, class: IntervalClass) -> u32 {
    tag.delta(class)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("changed-client share must be 10, 20 or 30 percent, got {0}")]
    Percent(u32),
    #[error("delta_d must be at least 1")]
    ZeroDelta,
    #[error("unknown interval class {0:?}")]
    UnknownClass(String),
    #[error("unknown demand distribution {0:?}")]
    UnknownDistribution(String),
    #[error("scenario name {0:?} is not of the form <10|20|30><S|M|L>")]
    Name(String),
}

/// A demand perturbation: redraw `nc`% of the demands within `±delta_d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub nc: u32,
    pub class: IntervalClass,
    pub delta_d: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn new(nc: u32, class: IntervalClass, delta_d: u32, seed: u64) -> Result<Self, ScenarioError> {
        if !matches!(nc, 10 | 20 | 30) {
            return Err(ScenarioError::Percent(nc));
        }
        if delta_d == 0 {
            return Err(ScenarioError::ZeroDelta);
        }
        Ok(Scenario {
            nc,
            class,
            delta_d,
            seed,
        })
    }

    pub fn for_distribution(
        nc: u32,
        class: IntervalClass,
        tag: DemandDistribution,
        seed: u64,
    ) -> Result<Self, ScenarioError> {
        Scenario::new(nc, class, tag.delta(class), seed)
    }

    /// Parses names like `20M`.
    pub fn parse_label(label: &str) -> Result<(u32, IntervalClass), ScenarioError> {
        let bad = || ScenarioError::Name(label.into());
        if label.len() < 2 || !label.is_ascii() {
            return Err(bad());
        }
        let (num, class) = label.split_at(label.len() - 1);
        let nc: u32 = num.parse().map_err(|_| bad())?;
        if !matches!(nc, 10 | 20 | 30) {
            return Err(bad());
        }
        Ok((nc, class.parse().map_err(|_| bad())?))
    }

    /// Number of clients whose demand is redrawn: `round(nc·n/100)`, halves up.
    pub fn changed_count(&self, n: usize) -> usize {
        (self.nc as usize * n + 50) / 100
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.nc, self.class.letter())
    }
}

/// A perturbed instance together with the set of redrawn clients.
///
/// A redraw may land on the original value, so `changed` is tracked
/// separately from the demand values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modified {
    pub instance: Instance,
    /// Sorted client ids.
    pub changed: Vec<usize>,
}

impl Modified {
    /// Wraps an instance with no changed clients.
    pub fn unchanged(instance: Instance) -> Self {
        Modified {
            instance,
            changed: Vec::new(),
        }
    }

    pub fn is_changed(&self, node: usize) -> bool {
        self.changed.binary_search(&node).is_ok()
    }
}

/// Redraws the demands of `round(nc·n/100)` uniformly chosen clients.
///
/// Each selected demand is drawn uniformly from
/// `[max(1, d − Δd), min(Q, d + Δd)]`. Coordinates, capacity and client
/// count are untouched. Pure function of `(inst, scn)`.
pub fn perturb(inst: &Instance, scn: &Scenario) -> Modified {
    let n = inst.n();
    let count = scn.changed_count(n).min(n);
    let mut rng = rng::rng(scn.seed);
    let mut changed: Vec<usize> = rand::seq::index::sample(&mut rng, n, count)
        .into_iter()
        .map(|k| k + 1)
        .collect();
    changed.sort_unstable();

    let q = inst.capacity();
    let mut demands: Vec<u32> = inst.demands().collect();
    for &c in &changed {
        let d = demands[c - 1];
        let lo = d.saturating_sub(scn.delta_d).max(1);
        let hi = d.saturating_add(scn.delta_d).min(q);
        demands[c - 1] = rng.gen_range(lo..=hi);
    }
    let instance = inst
        .with_demands(demands)
        .expect("clamped demands stay within [1, Q]");
    Modified { instance, changed }
}

/// Random instance on the integer grid `[0, 1000)²` with the depot at the
/// center and demands uniform in `[1, max_demand]`. Capacity is sized for
/// routes of about `route_len` clients.
pub fn synthetic(name: impl Into<String>, n: usize, max_demand: u32, route_len: usize, seed: u64) -> Instance {
    let mut r = rng::rng(seed);
    let clients: Vec<Client> = (0..n.max(1))
        .map(|_| Client {
            pos: Point::new(r.gen_range(0..1000) as f64, r.gen_range(0..1000) as f64),
            demand: r.gen_range(1..=max_demand.max(1)),
        })
        .collect();
    let total: u64 = clients.iter().map(|c| u64::from(c.demand)).sum();
    let per_route = total * route_len.max(1) as u64 / clients.len() as u64;
    let capacity = (per_route as u32).max(max_demand.max(1));
    Instance::new(name, capacity, Point::new(500.0, 500.0), clients, Rounding::RoundedEuclidean)
        .expect("demands within capacity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn grid_instance(n: usize, q: u32, seed: u64) -> Instance {
        let mut r = rng::rng(seed);
        let clients = (0..n)
            .map(|_| Client {
                pos: Point::new(r.gen_range(0..1000) as f64, r.gen_range(0..1000) as f64),
                demand: r.gen_range(1..=q),
            })
            .collect();
        Instance::new("t", q, Point::new(500.0, 500.0), clients, Rounding::RoundedEuclidean).unwrap()
    }

    #[test]
    fn pythagorean_distance() {
        let inst = Instance::new(
            "p",
            10,
            Point::new(0.0, 0.0),
            vec![
                Client { pos: Point::new(3.0, 4.0), demand: 1 },
                Client { pos: Point::new(1.0, 1.0), demand: 1 },
            ],
            Rounding::RoundedEuclidean,
        )
        .unwrap();
        assert_eq!(inst.distance(0, 1), 5.0);
        assert_eq!(inst.distance(0, 2), 1.0);
        assert_eq!(inst.distance(2, 2), 0.0);
        let exact = inst.clone().with_rounding(Rounding::ExactEuclidean);
        assert!((exact.distance(0, 2) - core::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rounding_is_half_up() {
        // 0.5 away
        let a = Point::new(0.0, 0.0);
        assert_eq!(euclidean(a, Point::new(0.5, 0.0), Rounding::RoundedEuclidean), 1.0);
        assert_eq!(euclidean(a, Point::new(2.5, 0.0), Rounding::RoundedEuclidean), 3.0);
        assert_eq!(euclidean(a, Point::new(2.49, 0.0), Rounding::RoundedEuclidean), 2.0);
    }

    #[test]
    fn symmetric_on_random_pairs() {
        let inst = grid_instance(60, 100, 3);
        let mut r = rng::rng(11);
        for _ in 0..1000 {
            let a = r.gen_range(0..inst.node_count());
            let b = r.gen_range(0..inst.node_count());
            assert_eq!(inst.distance(a, b), inst.distance(b, a));
            assert!(inst.distance(a, b) >= 0.0);
        }
    }

    #[test]
    fn invalid_instances_rejected() {
        let depot = Point::new(0.0, 0.0);
        let c = |d| Client { pos: Point::new(1.0, 1.0), demand: d };
        assert_eq!(
            Instance::new("x", 100, depot, vec![c(101)], Rounding::default()),
            Err(InstanceError::DemandOutOfRange { client: 1, demand: 101, capacity: 100 })
        );
        assert!(matches!(
            Instance::new("x", 100, depot, vec![c(0)], Rounding::default()),
            Err(InstanceError::DemandOutOfRange { .. })
        ));
        assert_eq!(
            Instance::new("x", 0, depot, vec![], Rounding::default()),
            Err(InstanceError::ZeroCapacity)
        );
        assert_eq!(
            Instance::new("x", 1, Point::new(f64::NAN, 0.0), vec![c(1)], Rounding::default()),
            Err(InstanceError::NonFiniteCoordinate { node: 0 })
        );
        let one = Instance::new("x", 1, depot, vec![Client { pos: Point::new(3.0, 4.0), demand: 1 }], Rounding::default()).unwrap();
        assert_eq!(one.n(), 1);
        assert_eq!(one.demand(DEPOT), 0);
    }

    #[test]
    fn delta_table() {
        use DemandDistribution::*;
        use IntervalClass::*;
        assert_eq!(resolve_delta(Range5To10, Small), 1);
        assert_eq!(resolve_delta(Range1To100, Large), 15);
        assert_eq!(resolve_delta(Range1To10, Medium), 3);
        let rows = [
            (Range1To100, [5, 10, 15]),
            (Range50To100, [5, 10, 15]),
            (Range5To10, [1, 2, 3]),
            (Quadrant, [5, 10, 15]),
            (Range1To10, [2, 3, 4]),
        ];
        for (tag, expected) in rows {
            for (class, want) in IntervalClass::ALL.iter().zip(expected) {
                assert_eq!(tag.delta(*class), want);
            }
        }
    }

    #[test]
    fn scenario_labels() {
        assert_eq!(Scenario::parse_label("20M").unwrap(), (20, IntervalClass::Medium));
        assert!(Scenario::parse_label("25M").is_err());
        assert!(Scenario::parse_label("20X").is_err());
        assert!(Scenario::new(15, IntervalClass::Small, 1, 0).is_err());
        assert!(Scenario::new(10, IntervalClass::Small, 0, 0).is_err());
        let s = Scenario::new(30, IntervalClass::Large, 4, 0).unwrap();
        assert_eq!(alloc::format!("{s}"), "30L");
    }

    #[test]
    fn perturb_changes_twenty_percent() {
        let inst = grid_instance(100, 100, 1);
        let scn = Scenario::for_distribution(20, IntervalClass::Medium, DemandDistribution::Range1To100, 42).unwrap();
        let m = perturb(&inst, &scn);
        assert_eq!(m.changed.len(), 20);
        for c in 1..=100 {
            if !m.is_changed(c) {
                assert_eq!(m.instance.demand(c), inst.demand(c));
            } else {
                let d = inst.demand(c) as i64;
                let nd = m.instance.demand(c) as i64;
                assert!((nd - d).abs() <= 10);
            }
        }
        assert_eq!(perturb(&inst, &scn), m);
    }

    #[test]
    fn degenerate_interval_keeps_demands() {
        let clients = (0..10)
            .map(|k| Client { pos: Point::new(k as f64, 0.0), demand: 1 })
            .collect();
        let inst = Instance::new("u", 1, Point::new(0.0, 0.0), clients, Rounding::default()).unwrap();
        let scn = Scenario::new(30, IntervalClass::Large, 15, 9).unwrap();
        let m = perturb(&inst, &scn);
        assert_eq!(m.changed.len(), 3);
        assert_eq!(m.instance, inst);
    }

    #[test]
    fn changed_count_half_up() {
        let s = Scenario::new(10, IntervalClass::Small, 1, 0).unwrap();
        assert_eq!(s.changed_count(105), 11);
        assert_eq!(s.changed_count(104), 10);
        assert_eq!(s.changed_count(5), 1);
        assert_eq!(s.changed_count(4), 0);
    }

    proptest! {
        #[test]
        fn perturb_preserves_structure(
            n in 1usize..80, q in 1u32..200, seed in any::<u64>(),
            nc in prop::sample::select(vec![10u32, 20, 30]), delta in 1u32..40,
        ) {
            let inst = grid_instance(n, q, seed ^ 0x55);
            let scn = Scenario::new(nc, IntervalClass::Medium, delta, seed).unwrap();
            let m = perturb(&inst, &scn);
            prop_assert_eq!(m.changed.len(), (nc as usize * n + 50) / 100);
            prop_assert!(m.changed.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(m.instance.n(), n);
            prop_assert_eq!(m.instance.capacity(), q);
            for c in 1..=n {
                prop_assert_eq!(m.instance.point(c), inst.point(c));
                let d = m.instance.demand(c);
                prop_assert!(d >= 1 && d <= q);
            }
        }
    }
}
