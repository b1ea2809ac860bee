use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::units::{Placed, Problem};
use super::{Forced, Solution, SolverError};
use crate::instance::{Instance, DEPOT};
use crate::rng;

/// Neighbors considered at each step of the ruin walk.
const WALK_FANOUT: usize = 5;

/// Largest number of units removed per ruin step for `units` visit units.
pub fn ruin_max(units: usize) -> usize {
    (units / 10).max(3).min(units)
}

/// Ruin-and-recreate from `sol` for `budget` iterations.
///
/// Each iteration removes `k ∈ [1, ruin_max]` units along a random walk over
/// nearest-unit neighbors, then reinserts them one by one (random order) at
/// the cheapest feasible position. The candidate replaces the incumbent only
/// when it is strictly cheaper.
pub fn improve(
    inst: &Instance,
    sol: &Solution,
    forced: &Forced,
    budget: u64,
    seed: u64,
) -> Result<Solution, SolverError> {
    improve_traced(inst, sol, forced, budget, seed, |_, _| {})
}

/// [`improve`], calling `trace(iteration, incumbent_cost)` after each
/// iteration.
pub fn improve_traced(
    inst: &Instance,
    sol: &Solution,
    forced: &Forced,
    budget: u64,
    seed: u64,
    mut trace: impl FnMut(u64, f64),
) -> Result<Solution, SolverError> {
    let problem = Problem::new(inst, forced)?;
    let start = problem.place(sol)?;
    if budget == 0 {
        return Ok(sol.clone());
    }
    let routes = ruin_recreate(&problem, start, budget, seed, &mut trace);
    Ok(problem.to_solution(&routes))
}

fn neighbor_lists(p: &Problem<'_>) -> Vec<Vec<usize>> {
    let m = p.units.len();
    let gap = |a: usize, b: usize| -> f64 {
        let (ua, ub) = (&p.units[a], &p.units[b]);
        let mut best = f64::INFINITY;
        for &x in &ua.ends {
            for &y in &ub.ends {
                best = best.min(p.d(x, y));
            }
        }
        best
    };
    (0..m)
        .map(|a| {
            let mut others: Vec<(f64, usize)> =
                (0..m).filter(|&b| b != a).map(|b| (gap(a, b), b)).collect();
            others.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
            others.into_iter().map(|(_, b)| b).collect()
        })
        .collect()
}

pub(crate) fn ruin_recreate(
    p: &Problem<'_>,
    mut current: Vec<Vec<Placed>>,
    budget: u64,
    seed: u64,
    trace: &mut impl FnMut(u64, f64),
) -> Vec<Vec<Placed>> {
    let m = p.units.len();
    let neighbors = neighbor_lists(p);
    let kmax = ruin_max(m);
    let mut rng = rng::rng(seed);
    let mut current_cost = p.total_cost(&current);
    let mut candidate: Vec<Vec<Placed>> = Vec::new();
    let mut removed: Vec<usize> = Vec::with_capacity(kmax);
    let mut is_removed = vec![false; m];
    let mut options: Vec<usize> = Vec::with_capacity(WALK_FANOUT);

    for it in 0..budget {
        candidate.clone_from(&current);

        let k = rng.gen_range(1..=kmax);
        removed.clear();
        let mut at = rng.gen_range(0..m);
        removed.push(at);
        is_removed[at] = true;
        while removed.len() < k {
            options.clear();
            options.extend(
                neighbors[at]
                    .iter()
                    .copied()
                    .filter(|&u| !is_removed[u])
                    .take(WALK_FANOUT),
            );
            if options.is_empty() {
                break;
            }
            at = options[rng.gen_range(0..options.len())];
            removed.push(at);
            is_removed[at] = true;
        }
        for r in candidate.iter_mut() {
            r.retain(|q| !is_removed[q.unit]);
        }
        candidate.retain(|r| !r.is_empty());

        removed.shuffle(&mut rng);
        for &u in &removed {
            insert_cheapest(p, &mut candidate, u);
            is_removed[u] = false;
        }

        debug_assert!(candidate.iter().all(|r| p.route_ok(r)));
        let cost = p.total_cost(&candidate);
        if cost < current_cost {
            core::mem::swap(&mut current, &mut candidate);
            current_cost = cost;
        }
        trace(it, current_cost);
    }
    current
}

/// Inserts unit `u` where it adds the least cost, opening a new route if
/// nothing cheaper is feasible.
pub(crate) fn insert_cheapest(p: &Problem<'_>, routes: &mut Vec<Vec<Placed>>, u: usize) {
    let unit = &p.units[u];
    let orientations: &[bool] = if unit.is_client() { &[false] } else { &[false, true] };

    let alone = |rev: bool| {
        let q = Placed { unit: u, rev };
        p.d(DEPOT, p.entry(q)) + unit.inner + p.d(p.exit(q), DEPOT)
    };
    let mut best_delta = alone(false);
    let mut best: Option<(usize, usize, bool)> = None;
    let mut best_new_rev = false;
    if !unit.is_client() && alone(true) < best_delta {
        best_delta = alone(true);
        best_new_rev = true;
    }

    for (ri, route) in routes.iter().enumerate() {
        let load: u64 = route.iter().map(|q| p.units[q.unit].demand).sum();
        if load + unit.demand > p.capacity {
            continue;
        }
        let len = route.len();
        for pos in 0..=len {
            let prev = if pos == 0 { DEPOT } else { p.exit(route[pos - 1]) };
            let next = if pos == len { DEPOT } else { p.entry(route[pos]) };
            let first = pos == 0;
            let last = pos == len;
            if unit.is_linked() && !first && !last {
                continue;
            }
            // displaced end units lose their depot adjacency
            if first && len > 0 && !p.placement_ok(route[0], false, len == 1) {
                continue;
            }
            if last && len > 0 && !p.placement_ok(route[len - 1], len == 1, false) {
                continue;
            }
            let base = p.d(prev, next);
            for &rev in orientations {
                let q = Placed { unit: u, rev };
                if !p.placement_ok(q, first, last) {
                    continue;
                }
                let delta = p.d(prev, p.entry(q)) + unit.inner + p.d(p.exit(q), next) - base;
                if delta < best_delta {
                    best_delta = delta;
                    best = Some((ri, pos, rev));
                }
            }
        }
    }
    match best {
        Some((ri, pos, rev)) => routes[ri].insert(pos, Placed { unit: u, rev }),
        None => routes.push(vec![Placed { unit: u, rev: best_new_rev }]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Point, Rounding};
    use crate::solver::{brute_force_optimal, savings_construct, Segment};

    fn random_instance(n: usize, seed: u64) -> Instance {
        let mut r = rng::rng(seed);
        let clients = (0..n)
            .map(|_| Client {
                pos: Point::new(r.gen_range(0..100) as f64, r.gen_range(0..100) as f64),
                demand: r.gen_range(1..=10),
            })
            .collect();
        Instance::new("r", 20, Point::new(50.0, 50.0), clients, Rounding::RoundedEuclidean).unwrap()
    }

    #[test]
    fn zero_budget_is_identity() {
        let i = random_instance(12, 1);
        let s = savings_construct(&i, &Forced::none()).unwrap();
        assert_eq!(improve(&i, &s, &Forced::none(), 0, 5).unwrap(), s);
    }

    #[test]
    fn incumbent_never_worsens() {
        let i = random_instance(25, 2);
        let s = savings_construct(&i, &Forced::none()).unwrap();
        let mut last = s.cost;
        let out = improve_traced(&i, &s, &Forced::none(), 2000, 9, |_, c| {
            assert!(c <= last);
            last = c;
        })
        .unwrap();
        assert!(out.cost <= s.cost);
        assert_eq!(out.cost, last);
        assert!(out.check(&i, &Forced::none()).is_ok());
    }

    #[test]
    fn six_clients_reach_optimum() {
        for seed in 0..5 {
            let i = random_instance(6, 100 + seed);
            let s = savings_construct(&i, &Forced::none()).unwrap();
            let out = improve(&i, &s, &Forced::none(), 10_000, seed).unwrap();
            let opt = brute_force_optimal(&i, &Forced::none()).unwrap();
            assert_eq!(out.cost, opt.cost, "seed {seed}");
        }
    }

    #[test]
    fn forced_structure_survives_search() {
        let i = random_instance(20, 3);
        let f = Forced {
            segments: alloc::vec![
                Segment::from_path(&i, alloc::vec![1, 2, 3]),
                Segment::from_path(&i, alloc::vec![7, 5]),
            ],
            depot_links: alloc::vec![3, 11],
        };
        let s = savings_construct(&i, &f).unwrap();
        let out = improve(&i, &s, &f, 3000, 4).unwrap();
        assert!(out.check(&i, &f).is_ok());
        assert!(out.cost <= s.cost);
    }

    #[test]
    fn replay_is_deterministic() {
        let i = random_instance(30, 4);
        let s = savings_construct(&i, &Forced::none()).unwrap();
        let a = improve(&i, &s, &Forced::none(), 1500, 77).unwrap();
        let b = improve(&i, &s, &Forced::none(), 1500, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ruin_size_bounds() {
        assert_eq!(ruin_max(2), 2);
        assert_eq!(ruin_max(8), 3);
        assert_eq!(ruin_max(100), 10);
    }
}
