use alloc::vec::Vec;

use super::units::{Placed, Problem};
use super::{Forced, Solution, SolverError};
use crate::instance::{Instance, DEPOT};

/// Clarke–Wright savings over visit units.
///
/// Starts from one route per unit and merges route ends in order of
/// decreasing saving `c_0i + c_0j − c_ij`, ties broken by `(i, j)`. A merge is
/// skipped when it would exceed capacity or detach a depot-linked end. Merges
/// only join route ends, so forced segments are never split.
pub fn savings_construct(inst: &Instance, forced: &Forced) -> Result<Solution, SolverError> {
    let problem = Problem::new(inst, forced)?;
    let routes = construct_units(&problem);
    Ok(problem.to_solution(&routes))
}

pub(crate) fn construct_units(p: &Problem<'_>) -> Vec<Vec<Placed>> {
    let m = p.units.len();
    // (node, unit) for every distinct endpoint
    let mut ends: Vec<(usize, usize)> = Vec::with_capacity(2 * m);
    for (k, u) in p.units.iter().enumerate() {
        ends.push((u.ends[0], k));
        if u.ends[1] != u.ends[0] {
            ends.push((u.ends[1], k));
        }
    }

    let mut savings: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
    for a in 0..ends.len() {
        for b in a + 1..ends.len() {
            let (x, ux) = ends[a];
            let (y, uy) = ends[b];
            if ux == uy {
                continue;
            }
            let s = p.d(DEPOT, x) + p.d(DEPOT, y) - p.d(x, y);
            if s > 0.0 {
                let (i, j, ui, uj) = if x < y { (x, y, ux, uy) } else { (y, x, uy, ux) };
                savings.push((s, i, j, ui, uj));
            }
        }
    }
    savings.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });

    let mut routes: Vec<Vec<Placed>> = (0..m).map(|u| alloc::vec![Placed { unit: u, rev: false }]).collect();
    let mut route_of: Vec<usize> = (0..m).collect();
    let mut load: Vec<u64> = p.units.iter().map(|u| u.demand).collect();

    for &(_, i, j, ui, uj) in &savings {
        let (ri, rj) = (route_of[ui], route_of[uj]);
        if ri == rj || load[ri] + load[rj] > p.capacity {
            continue;
        }
        let Some(left) = oriented(p, &routes[ri], i, true) else {
            continue;
        };
        let Some(right) = oriented(p, &routes[rj], j, false) else {
            continue;
        };
        let mut merged = left;
        merged.extend(right);
        if !p.route_ok(&merged) {
            continue;
        }
        for q in &merged {
            route_of[q.unit] = ri;
        }
        routes[ri] = merged;
        routes[rj].clear();
        load[ri] += load[rj];
        load[rj] = 0;
    }
    routes.retain(|r| !r.is_empty());
    routes
}

/// `route` turned so that `node` is its last exit (`at_tail`) or first
/// entry; `None` if `node` is not at a route end.
fn oriented(p: &Problem<'_>, route: &[Placed], node: usize, at_tail: bool) -> Option<Vec<Placed>> {
    let first = *route.first()?;
    let last = *route.last()?;
    let flip = |r: &[Placed]| -> Vec<Placed> {
        r.iter()
            .rev()
            .map(|q| Placed { unit: q.unit, rev: !q.rev })
            .collect()
    };
    if route.len() == 1 {
        let mut q = first;
        if at_tail {
            if p.exit(q) != node {
                q.rev = !q.rev;
            }
        } else if p.entry(q) != node {
            q.rev = !q.rev;
        }
        return Some(alloc::vec![q]);
    }
    let (keep, turn) = if at_tail {
        (p.exit(last) == node, p.entry(first) == node)
    } else {
        (p.entry(first) == node, p.exit(last) == node)
    };
    if keep {
        Some(route.to_vec())
    } else if turn {
        Some(flip(route))
    } else {
        None
    }
}
