//! Brute-force ground truth for small graphs: enumerate every way of
//! partitioning trips into vehicle routes, per commodity, and keep the best.
//! Exponential by construction; guarded so it is only ever run on instances
//! where that is fine.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{ArcKind, FlowGraph, NodeKind};
use crate::instance::{DepotId, TripId};

pub const MAX_ORACLE_TRIPS: usize = 12;
pub const MAX_ORACLE_VEHICLES: i64 = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance beyond oracle guards: {trips} trips, {vehicles} vehicles")]
    TooLarge { trips: usize, vehicles: i64 },
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub objective_micro: i64,
    /// Covering commodity per covered trip.
    pub assignment: BTreeMap<TripId, usize>,
    /// Trips of each vehicle that left the depot, with its commodity.
    pub routes: Vec<(usize, Vec<TripId>)>,
}

struct TripInfo {
    id: TripId,
    origin: DepotId,
    dest: DepotId,
    savings: Vec<Option<i64>>,
}

#[derive(Clone)]
struct Vehicle {
    commodity: usize,
    home: DepotId,
    at: DepotId,
    trips: Vec<usize>,
}

struct Search<'a> {
    trips: &'a [TripInfo],
    chain_ok: &'a [Vec<bool>],
    vehicles: Vec<Vehicle>,
    fleet: BTreeMap<(usize, DepotId), i64>,
    suffix_best: Vec<i64>,
    best: i64,
    best_routes: Vec<Vehicle>,
}

impl Search<'_> {
    fn run(&mut self, t: usize, value: i64) {
        if value + self.suffix_best[t] <= self.best && !self.best_routes.is_empty() {
            return;
        }
        if t == self.trips.len() {
            if self.end_counts_match() && (value > self.best || self.best_routes.is_empty()) {
                self.best = value;
                self.best_routes = self.vehicles.clone();
            }
            return;
        }

        // leave the trip uncovered
        self.run(t + 1, value);

        let trip = &self.trips[t];
        let mut tried_fresh: Vec<(usize, DepotId)> = Vec::new();
        for v in 0..self.vehicles.len() {
            let veh = &self.vehicles[v];
            let Some(savings) = trip.savings[veh.commodity] else { continue };
            let reachable = match veh.trips.last() {
                None => {
                    // identical idle vehicles: try one per (commodity, home)
                    if veh.at != trip.origin || tried_fresh.contains(&(veh.commodity, veh.home)) {
                        continue;
                    }
                    tried_fresh.push((veh.commodity, veh.home));
                    true
                }
                Some(&last) => self.chain_ok[last][t] && self.trips[last].dest == trip.origin,
            };
            if !reachable {
                continue;
            }
            let prev_at = self.vehicles[v].at;
            self.vehicles[v].trips.push(t);
            self.vehicles[v].at = trip.dest;
            self.run(t + 1, value + savings);
            self.vehicles[v].trips.pop();
            self.vehicles[v].at = prev_at;
        }
    }

    /// Every vehicle must end the day where its commodity's depot demand
    /// expects it; idle vehicles sit at their home depot.
    fn end_counts_match(&self) -> bool {
        let mut ends: BTreeMap<(usize, DepotId), i64> = BTreeMap::new();
        for v in &self.vehicles {
            *ends.entry((v.commodity, v.at)).or_insert(0) += 1;
        }
        for (key, want) in &self.fleet {
            if ends.get(key).copied().unwrap_or(0) != *want {
                return false;
            }
        }
        true
    }
}

/// Topological order of the trips under the chain relation; ties keep the
/// lower index first. The relation is acyclic by construction of the graph.
fn chain_topo_order(chain_ok: &[Vec<bool>]) -> Vec<usize> {
    let n = chain_ok.len();
    let mut indeg = vec![0usize; n];
    for row in chain_ok {
        for (j, ok) in row.iter().enumerate() {
            if *ok {
                indeg[j] += 1;
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|i| indeg[*i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&i) = ready.first() {
        ready.remove(&i);
        order.push(i);
        for (j, ok) in chain_ok[i].iter().enumerate() {
            if *ok {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
    }
    assert_eq!(order.len(), n, "chain relation must be acyclic");
    order
}

/// Exhaustive optimum of a built flow graph (single- or multi-commodity).
/// Feasibility is read off the graph itself: depot access and connection
/// arcs define where vehicles may start, chain and end.
pub fn oracle_solve(graph: &FlowGraph) -> Result<OracleResult, OracleError> {
    let k_count = graph.commodity_count();

    // Vehicles per (commodity, depot): depot-start balances in the single
    // graph, fleet-arc capacities behind the sources in the multi graph.
    let mut fleet: BTreeMap<(usize, DepotId), i64> = BTreeMap::new();
    for k in 0..k_count {
        for (node, kind) in graph.nodes.iter().enumerate() {
            if let NodeKind::DepotStart { depot, .. } = kind {
                let via_balance = -graph.balance[k][node].min(0);
                let via_fleet: i64 = graph
                    .arcs
                    .iter()
                    .filter(|a| {
                        a.head == node
                            && a.kind == ArcKind::Fleet
                            && a.savings_micro[k].is_some()
                    })
                    .map(|a| a.capacity)
                    .sum();
                let count = via_balance + via_fleet;
                if count > 0 {
                    *fleet.entry((k, *depot)).or_insert(0) += count;
                }
            }
        }
    }
    let vehicles_total: i64 = fleet.values().sum();

    let mut trips: Vec<TripInfo> = Vec::new();
    let mut trip_index: BTreeMap<TripId, usize> = BTreeMap::new();
    for (arc, id) in graph.trip_arcs() {
        let a = &graph.arcs[arc];
        let origin = graph
            .arcs
            .iter()
            .find_map(|acc| match (acc.kind, graph.nodes[acc.tail]) {
                (ArcKind::DepotAccess, NodeKind::DepotStart { depot, .. })
                    if acc.head == a.tail =>
                {
                    Some(depot)
                }
                _ => None,
            })
            .expect("trip start must be reachable from a depot");
        let dest = graph
            .arcs
            .iter()
            .find_map(|acc| match (acc.kind, graph.nodes[acc.head]) {
                (ArcKind::DepotAccess, NodeKind::DepotEnd { depot, .. })
                    if acc.tail == a.head =>
                {
                    Some(depot)
                }
                _ => None,
            })
            .expect("trip end must reach a depot");
        trip_index.insert(id, trips.len());
        trips.push(TripInfo { id, origin, dest, savings: a.savings_micro.clone() });
    }

    if trips.len() > MAX_ORACLE_TRIPS || vehicles_total > MAX_ORACLE_VEHICLES {
        return Err(OracleError::TooLarge { trips: trips.len(), vehicles: vehicles_total });
    }

    // chain_ok[i][j]: some connection arc allows rolling from trip i into j
    // (commodity eligibility is rechecked against the trip savings at use).
    let mut chain_ok = vec![vec![false; trips.len()]; trips.len()];
    for a in &graph.arcs {
        if let ArcKind::Connection { from, to } = a.kind {
            chain_ok[trip_index[&from]][trip_index[&to]] = true;
        }
    }

    // Enumerate trips in an order compatible with the chaining relation, so
    // every feasible route is a subsequence of the processing order.
    let perm = chain_topo_order(&chain_ok);
    let trips: Vec<TripInfo> = {
        let mut by_pos: Vec<Option<TripInfo>> = trips.into_iter().map(Some).collect();
        perm.iter().map(|&i| by_pos[i].take().expect("permutation")).collect()
    };
    let chain_ok: Vec<Vec<bool>> = perm
        .iter()
        .map(|&i| perm.iter().map(|&j| chain_ok[i][j]).collect())
        .collect();

    let mut vehicles = Vec::new();
    for (&(k, depot), &count) in &fleet {
        for _ in 0..count {
            vehicles.push(Vehicle { commodity: k, home: depot, at: depot, trips: Vec::new() });
        }
    }

    // suffix_best[t]: loose upper bound on savings still collectable from
    // trip t on, used to prune hopeless branches
    let mut suffix_best = vec![0i64; trips.len() + 1];
    for t in (0..trips.len()).rev() {
        let gain = trips[t].savings.iter().flatten().copied().max().unwrap_or(0).max(0);
        suffix_best[t] = suffix_best[t + 1] + gain;
    }

    let mut search = Search {
        trips: &trips,
        chain_ok: &chain_ok,
        vehicles,
        fleet,
        suffix_best,
        best: 0,
        best_routes: Vec::new(),
    };
    search.run(0, 0);
    assert!(
        !search.best_routes.is_empty() || search.trips.is_empty() || vehicles_total == 0,
        "the all-idle assignment is always feasible"
    );

    let mut assignment = BTreeMap::new();
    let mut routes = Vec::new();
    for v in &search.best_routes {
        if v.trips.is_empty() {
            continue;
        }
        for &t in &v.trips {
            assignment.insert(trips[t].id, v.commodity);
        }
        routes.push((v.commodity, v.trips.iter().map(|&t| trips[t].id).collect()));
    }
    Ok(OracleResult { objective_micro: search.best.max(0), assignment, routes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_single_graph;
    use crate::mincost::solve_min_cost_flow;
    use crate::mot::Mot;
    use std::collections::BTreeMap as Map;

    fn fleet(counts: &[(u32, u32)]) -> Map<DepotId, u32> {
        counts.iter().map(|(d, n)| (DepotId(*d), *n)).collect()
    }

    #[test]
    fn empty_graph_scores_zero() {
        let inst = crate::graph::tests::grid_instance(&[]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let res = oracle_solve(&g).unwrap();
        assert_eq!(res.objective_micro, 0);
        assert!(res.assignment.is_empty());
    }

    #[test]
    fn single_trip_is_covered_when_worth_it() {
        let inst = crate::graph::tests::grid_instance(&[(0, 0, 600.0)]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let res = oracle_solve(&g).unwrap();
        let solver = solve_min_cost_flow(&g);
        assert_eq!(res.objective_micro, solver.objective_micro);
    }

    #[test]
    fn guard_rejects_oversized_instances() {
        let specs: Vec<(u32, u32, f64)> = (0..13).map(|i| (0, 0, 420.0 + 70.0 * i as f64)).collect();
        let inst = crate::graph::tests::grid_instance(&specs);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        assert!(matches!(oracle_solve(&g), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn oracle_respects_end_depot_balance() {
        // one vehicle at each depot; a single depot-crossing trip can only be
        // covered if another crossing trip restores the balance, so alone it
        // must stay uncovered
        let inst = crate::graph::tests::grid_instance(&[(0, 1, 600.0)]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1), (1, 1)])).unwrap();
        let res = oracle_solve(&g).unwrap();
        assert_eq!(res.objective_micro, 0);
        assert!(res.assignment.is_empty());
        // the flow solver must agree
        let solver = solve_min_cost_flow(&g);
        assert_eq!(solver.objective_micro, 0);
    }

    #[test]
    fn oracle_uses_crossing_pair_when_available() {
        let inst = crate::graph::tests::grid_instance(&[(0, 1, 540.0), (1, 0, 900.0)]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let res = oracle_solve(&g).unwrap();
        let solver = solve_min_cost_flow(&g);
        assert_eq!(res.objective_micro, solver.objective_micro);
        if res.objective_micro > 0 {
            assert_eq!(res.routes.len(), 1);
            assert_eq!(res.routes[0].1.len(), 2);
        }
    }
}
