use alloc::vec;
use alloc::vec::Vec;

use super::units::{Placed, Problem};
use super::{Forced, Solution, SolverError};
use crate::instance::{Instance, DEPOT};

pub const MAX_EXACT_UNITS: usize = 10;

/// Provably optimal solution by exhaustive dynamic programming.
///
/// For every unit subset the cheapest single route is found by a
/// Held–Karp recursion over (subset, last unit, orientation); the best set
/// partition into routes is then assembled by a subset DP. Exponential, so
/// limited to [`MAX_EXACT_UNITS`] visit units.
pub fn brute_force_optimal(inst: &Instance, forced: &Forced) -> Result<Solution, SolverError> {
    let p = Problem::new(inst, forced)?;
    let m = p.units.len();
    if m > MAX_EXACT_UNITS {
        return Err(SolverError::TooLarge {
            units: m,
            max: MAX_EXACT_UNITS,
        });
    }
    let routes = solve(&p);
    Ok(p.to_solution(&routes))
}

/// Link flags as seen from (entry, exit) of a unit under an orientation.
///
/// A linked free client uses orientation to pick which side touches the
/// depot: `rev = false` puts it first, `rev = true` puts it last.
fn entry_exit_links(p: &Problem<'_>, q: Placed) -> (bool, bool) {
    let u = &p.units[q.unit];
    if u.is_client() {
        if q.rev {
            (false, u.link[0])
        } else {
            (u.link[0], false)
        }
    } else {
        (u.link[q.rev as usize], u.link[!q.rev as usize])
    }
}

fn solve(p: &Problem<'_>) -> Vec<Vec<Placed>> {
    let m = p.units.len();
    let full = (1usize << m) - 1;
    let states = 2 * m;
    let idx = |mask: usize, u: usize, rev: bool| mask * states + 2 * u + rev as usize;

    let orientations = |u: usize| -> &'static [bool] {
        if p.units[u].is_client() && !p.units[u].link[0] {
            &[false]
        } else {
            &[false, true]
        }
    };

    let mut demand = vec![0u64; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        demand[mask] = demand[mask & (mask - 1)] + p.units[low].demand;
    }

    // path[mask, u, rev]: cheapest depot-rooted path over `mask` ending in u
    let mut path = vec![f64::INFINITY; (full + 1) * states];
    let mut parent = vec![usize::MAX; (full + 1) * states];
    for u in 0..m {
        for &rev in orientations(u) {
            let q = Placed { unit: u, rev };
            path[idx(1 << u, u, rev)] = p.d(DEPOT, p.entry(q)) + p.units[u].inner;
        }
    }
    for mask in 1..=full {
        if demand[mask] > p.capacity {
            continue;
        }
        for u in 0..m {
            if mask & (1 << u) == 0 {
                continue;
            }
            for &rev in orientations(u) {
                let here = path[idx(mask, u, rev)];
                if !here.is_finite() {
                    continue;
                }
                let q = Placed { unit: u, rev };
                if entry_exit_links(p, q).1 {
                    continue;
                }
                let exit = p.exit(q);
                for v in 0..m {
                    let next = mask | (1 << v);
                    if mask & (1 << v) != 0 || demand[next] > p.capacity {
                        continue;
                    }
                    for &vrev in orientations(v) {
                        let w = Placed { unit: v, rev: vrev };
                        if entry_exit_links(p, w).0 {
                            continue;
                        }
                        let cost = here + p.d(exit, p.entry(w)) + p.units[v].inner;
                        let slot = idx(next, v, vrev);
                        if cost < path[slot] {
                            path[slot] = cost;
                            parent[slot] = idx(mask, u, rev);
                        }
                    }
                }
            }
        }
    }

    // cheapest closed route per subset
    let mut route = vec![f64::INFINITY; full + 1];
    let mut route_end = vec![usize::MAX; full + 1];
    for mask in 1..=full {
        if demand[mask] > p.capacity {
            continue;
        }
        for u in 0..m {
            if mask & (1 << u) == 0 {
                continue;
            }
            for &rev in orientations(u) {
                let slot = idx(mask, u, rev);
                let q = Placed { unit: u, rev };
                let cost = path[slot] + p.d(p.exit(q), DEPOT);
                if cost < route[mask] {
                    route[mask] = cost;
                    route_end[mask] = slot;
                }
            }
        }
    }

    // set partition over subsets containing the lowest remaining unit
    let mut best = vec![f64::INFINITY; full + 1];
    let mut choice = vec![0usize; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            let cost = route[part] + best[mask ^ part];
            if cost < best[mask] {
                best[mask] = cost;
                choice[mask] = part;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }

    let mut routes = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let part = choice[mask];
        let mut seq = Vec::new();
        let mut slot = route_end[part];
        while slot != usize::MAX {
            let within = slot % states;
            seq.push(Placed {
                unit: within / 2,
                rev: within % 2 == 1,
            });
            slot = parent[slot];
        }
        seq.reverse();
        routes.push(seq);
        mask ^= part;
    }
    routes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Client, Point, Rounding};
    use crate::solver::Segment;
    use alloc::vec;

    fn inst(points: &[(f64, f64)], demands: &[u32], q: u32, depot: (f64, f64), rounding: Rounding) -> Instance {
        let clients = points
            .iter()
            .zip(demands)
            .map(|(&(x, y), &d)| Client { pos: Point::new(x, y), demand: d })
            .collect();
        Instance::new("t", q, Point::new(depot.0, depot.1), clients, rounding).unwrap()
    }

    #[test]
    fn single_client_out_and_back() {
        let i = inst(&[(3.0, 4.0)], &[1], 1, (0.0, 0.0), Rounding::RoundedEuclidean);
        let s = brute_force_optimal(&i, &Forced::none()).unwrap();
        assert_eq!(s.cost, 10.0);
        assert_eq!(s.client_routes(), vec![vec![1]]);
    }

    #[test]
    fn unit_square_pairs() {
        // corners of a unit square around a central depot, Q = 2: the best
        // partition pairs adjacent corners (route cost sqrt(.5)*2 + 1)
        let i = inst(
            &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
            &[1, 1, 1, 1],
            2,
            (0.5, 0.5),
            Rounding::ExactEuclidean,
        );
        let s = brute_force_optimal(&i, &Forced::none()).unwrap();
        let half_diag = core::f64::consts::SQRT_2 / 2.0;
        assert!((s.cost - 2.0 * (2.0 * half_diag + 1.0)).abs() < 1e-12);
        assert_eq!(s.routes.len(), 2);
        assert!(s.check(&i, &Forced::none()).is_ok());
    }

    #[test]
    fn whole_instance_as_one_segment() {
        let i = inst(
            &[(10.0, 0.0), (20.0, 0.0), (20.0, 10.0)],
            &[1, 1, 1],
            3,
            (0.0, 0.0),
            Rounding::RoundedEuclidean,
        );
        let seg = Segment::from_path(&i, vec![2, 1, 3]);
        let f = Forced::from_segments(vec![seg.clone()]);
        let s = brute_force_optimal(&i, &f).unwrap();
        let fwd = i.distance(0, 2) + seg.cost + i.distance(3, 0);
        let bwd = i.distance(0, 3) + seg.cost + i.distance(2, 0);
        assert_eq!(s.cost, fwd.min(bwd));
        assert!(s.check(&i, &f).is_ok());
    }

    #[test]
    fn depot_links_respected() {
        let i = inst(
            &[(10.0, 0.0), (20.0, 0.0), (30.0, 0.0), (40.0, 0.0)],
            &[1, 1, 1, 1],
            10,
            (0.0, 0.0),
            Rounding::RoundedEuclidean,
        );
        let f = Forced { segments: vec![], depot_links: vec![2] };
        let s = brute_force_optimal(&i, &f).unwrap();
        assert!(s.check(&i, &f).is_ok());
        let unconstrained = brute_force_optimal(&i, &Forced::none()).unwrap();
        assert_eq!(unconstrained.cost, 80.0);
        assert!(s.cost >= unconstrained.cost);
        // 0-1-3-4-2-0 keeps client 2 at a route end at no extra cost
        assert_eq!(s.cost, 80.0);
    }

    #[test]
    fn too_large_rejected() {
        let pts: Vec<(f64, f64)> = (0..11).map(|k| (k as f64, 1.0)).collect();
        let i = inst(&pts, &[1; 11], 5, (0.0, 0.0), Rounding::RoundedEuclidean);
        assert_eq!(
            brute_force_optimal(&i, &Forced::none()),
            Err(SolverError::TooLarge { units: 11, max: MAX_EXACT_UNITS })
        );
    }
}
