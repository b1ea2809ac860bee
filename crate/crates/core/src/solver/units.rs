use alloc::vec;
use alloc::vec::Vec;

use super::{Forced, Route, Solution, SolverError, Visit};
use crate::instance::{DistanceMatrix, Instance, DEPOT};

/// One visit unit: a free client (`ends[0] == ends[1]`) or a segment.
#[derive(Clone, Debug)]
pub(crate) struct Unit {
    pub ends: [usize; 2],
    /// Depot link required at each end. Free clients use `link[0]` only.
    pub link: [bool; 2],
    pub inner: f64,
    pub demand: u64,
    /// `None` for free clients.
    pub segment: Option<usize>,
}

impl Unit {
    pub fn is_client(&self) -> bool {
        self.segment.is_none()
    }

    pub fn is_linked(&self) -> bool {
        self.link[0] || self.link[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Placed {
    pub unit: usize,
    pub rev: bool,
}

/// An instance viewed as a set of visit units with a cached cost matrix.
pub(crate) struct Problem<'a> {
    pub forced: &'a Forced,
    pub dist: DistanceMatrix,
    pub units: Vec<Unit>,
    pub capacity: u64,
    /// Unit index of each free client, `usize::MAX` otherwise.
    client_unit: Vec<usize>,
}

impl<'a> Problem<'a> {
    pub fn new(inst: &Instance, forced: &'a Forced) -> Result<Self, SolverError> {
        forced.validate(inst)?;
        let n = inst.n();
        let mut in_segment = vec![false; n + 1];
        for s in &forced.segments {
            for &c in &s.clients {
                in_segment[c] = true;
            }
        }
        let mut linked = vec![false; n + 1];
        for &c in &forced.depot_links {
            linked[c] = true;
        }
        let mut units = Vec::with_capacity(n);
        let mut client_unit = vec![usize::MAX; n + 1];
        for c in 1..=n {
            if in_segment[c] {
                continue;
            }
            client_unit[c] = units.len();
            units.push(Unit {
                ends: [c, c],
                link: [linked[c], false],
                inner: 0.0,
                demand: u64::from(inst.demand(c)),
                segment: None,
            });
        }
        for (id, s) in forced.segments.iter().enumerate() {
            let (a, b) = (s.first(), s.last());
            units.push(Unit {
                ends: [a, b],
                link: [linked[a], linked[b]],
                inner: s.cost,
                demand: s.demand(inst),
                segment: Some(id),
            });
        }
        Ok(Problem {
            forced,
            dist: inst.distance_matrix(),
            units,
            capacity: u64::from(inst.capacity()),
            client_unit,
        })
    }

    #[inline]
    pub fn entry(&self, p: Placed) -> usize {
        self.units[p.unit].ends[p.rev as usize]
    }

    #[inline]
    pub fn exit(&self, p: Placed) -> usize {
        self.units[p.unit].ends[!p.rev as usize]
    }

    #[inline]
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.dist.get(a, b)
    }

    /// Whether `p`'s depot links hold when it is (or is not) first/last.
    pub fn placement_ok(&self, p: Placed, first: bool, last: bool) -> bool {
        let u = &self.units[p.unit];
        if u.is_client() {
            return !u.link[0] || first || last;
        }
        let entry_link = u.link[p.rev as usize];
        let exit_link = u.link[!p.rev as usize];
        (!entry_link || first) && (!exit_link || last)
    }

    pub fn route_ok(&self, route: &[Placed]) -> bool {
        let n = route.len();
        let load: u64 = route.iter().map(|p| self.units[p.unit].demand).sum();
        load <= self.capacity
            && route
                .iter()
                .enumerate()
                .all(|(k, &p)| self.placement_ok(p, k == 0, k + 1 == n))
    }

    pub fn route_cost(&self, route: &[Placed]) -> f64 {
        if route.is_empty() {
            return 0.0;
        }
        let mut cost = 0.0;
        let mut at = DEPOT;
        for &p in route {
            cost += self.d(at, self.entry(p)) + self.units[p.unit].inner;
            at = self.exit(p);
        }
        cost + self.d(at, DEPOT)
    }

    pub fn total_cost(&self, routes: &[Vec<Placed>]) -> f64 {
        routes.iter().map(|r| self.route_cost(r)).sum()
    }

    pub fn to_solution(&self, routes: &[Vec<Placed>]) -> Solution {
        let routes: Vec<Route> = routes
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| Route {
                visits: r
                    .iter()
                    .map(|&p| {
                        let u = &self.units[p.unit];
                        match u.segment {
                            None => Visit::Client(u.ends[0]),
                            Some(id) => Visit::Segment {
                                id,
                                reversed: p.rev,
                            },
                        }
                    })
                    .collect(),
            })
            .collect();
        let cost = routes
            .iter()
            .map(|r| super::route_cost_matrix(&self.dist, r, &self.forced.segments))
            .sum();
        Solution {
            routes,
            segments: self.forced.segments.clone(),
            cost,
        }
    }

    /// Maps a solution over the same forced set back to unit placements.
    pub fn place(&self, sol: &Solution) -> Result<Vec<Vec<Placed>>, SolverError> {
        if sol.segments != self.forced.segments {
            return Err(SolverError::Mismatch("segment lists differ"));
        }
        let mut seen = vec![false; self.units.len()];
        let mut out = Vec::with_capacity(sol.routes.len());
        for r in &sol.routes {
            let mut placed = Vec::with_capacity(r.visits.len());
            for v in &r.visits {
                let p = match *v {
                    Visit::Client(c) => {
                        let u = *self
                            .client_unit
                            .get(c)
                            .ok_or(SolverError::UnknownClient(c))?;
                        if u == usize::MAX {
                            return Err(SolverError::Mismatch("client inside a segment visited alone"));
                        }
                        Placed { unit: u, rev: false }
                    }
                    Visit::Segment { id, reversed } => {
                        let u = self.units.len() - self.forced.segments.len() + id;
                        if id >= self.forced.segments.len() {
                            return Err(SolverError::Mismatch("unknown segment id"));
                        }
                        Placed { unit: u, rev: reversed }
                    }
                };
                if core::mem::replace(&mut seen[p.unit], true) {
                    return Err(SolverError::Infeasible("unit visited twice"));
                }
                placed.push(p);
            }
            if !self.route_ok(&placed) {
                return Err(SolverError::Infeasible("route violates capacity or depot links"));
            }
            if !placed.is_empty() {
                out.push(placed);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SolverError::Infeasible("unit not visited"));
        }
        Ok(out)
    }
}
