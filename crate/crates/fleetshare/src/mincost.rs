//! Exact single-commodity solver: successive shortest augmenting paths with
//! node potentials, run on the negated savings so the maximum-savings flow
//! comes out of a min-cost computation. All arithmetic is on integer
//! micro-euros; the returned objective is exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::graph::{ArcId, ArcKind, FlowGraph, NodeId, NodeKind};
use crate::instance::{DepotId, TripId};

const INF: i64 = i64::MAX / 4;

/// Integral flow for a single-commodity graph.
#[derive(Debug, Clone)]
pub struct Flow {
    /// Units on each arc of the graph, arc-indexed.
    pub arc_flow: Vec<i64>,
    /// Total savings in micro-euros.
    pub objective_micro: i64,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow does not decompose into source-to-sink paths (stuck at node {0})")]
    DecompositionFailure(NodeId),
}

/// Per-commodity arc restrictions imposed by the branch-and-bound search.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ArcRestrictions<'a> {
    pub forced_zero: &'a [ArcId],
    pub forced_one: &'a [ArcId],
    /// Tightened capacities (arc-indexed) if present.
    pub cap_override: Option<&'a [i64]>,
}

#[derive(Debug, Clone)]
pub(crate) struct CommodityFlow {
    pub arc_flow: Vec<i64>,
    pub objective_micro: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("arc restrictions strand supply")]
pub(crate) struct Infeasible;

/// Maximum-savings flow meeting all depot supplies and demands. The graphs
/// built by this crate always admit a feasible flow (every depot has a bypass
/// arc), so infeasibility here is a caller bug and panics.
pub fn solve_min_cost_flow(graph: &FlowGraph) -> Flow {
    assert_eq!(
        graph.commodity_count(),
        1,
        "single-commodity solver called on a {}-commodity graph",
        graph.commodity_count()
    );
    let sol = solve_commodity(graph, 0, ArcRestrictions::default())
        .expect("balanced graph with bypass arcs cannot strand supply");
    Flow { arc_flow: sol.arc_flow, objective_micro: sol.objective_micro }
}

/// Min-cost flow for one commodity of `graph` under branch restrictions.
pub(crate) fn solve_commodity(
    graph: &FlowGraph,
    commodity: usize,
    restrictions: ArcRestrictions<'_>,
) -> Result<CommodityFlow, Infeasible> {
    solve_view(
        graph,
        &|a| graph.arcs[a].savings_micro[commodity],
        &graph.balance[commodity],
        restrictions,
    )
}

/// Min-cost flow over the graph's topology with caller-supplied arc values
/// and node balances. Used directly by the single-commodity solver and for
/// the adjusted-savings and pooled relaxations of the multi-type search.
pub(crate) fn solve_view(
    graph: &FlowGraph,
    savings_of: &dyn Fn(ArcId) -> Option<i64>,
    balance_in: &[i64],
    restrictions: ArcRestrictions<'_>,
) -> Result<CommodityFlow, Infeasible> {
    let mut scratch = FlowScratch::default();
    solve_view_scratch(graph, savings_of, balance_in, restrictions, &mut scratch)
}

/// Like [`solve_view`] but reusing the caller's scratch buffers; the search
/// runs thousands of solves and the allocations dominate otherwise.
pub(crate) fn solve_view_scratch(
    graph: &FlowGraph,
    savings_of: &dyn Fn(ArcId) -> Option<i64>,
    balance_in: &[i64],
    restrictions: ArcRestrictions<'_>,
    scratch: &mut FlowScratch,
) -> Result<CommodityFlow, Infeasible> {
    let n = graph.nodes.len();
    let source = n;
    let sink = n + 1;
    let net = &mut scratch.net;
    net.reset(n + 2);

    let mut balance = balance_in.to_vec();
    let mut base_objective = 0i64;
    let mut forced = vec![0i64; graph.arcs.len()];
    for &a in restrictions.forced_one {
        let arc = &graph.arcs[a];
        let savings = savings_of(a).expect("cannot force flow onto a barred arc");
        balance[arc.tail] += 1;
        balance[arc.head] -= 1;
        base_objective += savings;
        forced[a] = 1;
    }

    // long forbid lists (the parked-fleet solve bans every coupled arc) get a
    // mask instead of a per-arc linear scan
    let zero_mask = if restrictions.forced_zero.len() > 16 {
        scratch.zero_mask.clear();
        scratch.zero_mask.resize(graph.arcs.len(), false);
        for &a in restrictions.forced_zero {
            scratch.zero_mask[a] = true;
        }
        true
    } else {
        false
    };

    scratch.fwd.clear();
    scratch.fwd.resize(graph.arcs.len(), usize::MAX);
    scratch.values.clear();
    scratch.values.resize(graph.arcs.len(), 0);
    for (a, arc) in graph.arcs.iter().enumerate() {
        let Some(savings) = savings_of(a) else { continue };
        let banned = if zero_mask {
            scratch.zero_mask[a]
        } else {
            restrictions.forced_zero.contains(&a)
        };
        if banned {
            continue;
        }
        let cap_base = restrictions.cap_override.map_or(arc.capacity, |caps| caps[a]);
        let cap = cap_base - forced[a];
        if cap <= 0 {
            continue;
        }
        scratch.values[a] = savings;
        scratch.fwd[a] = net.add_arc(arc.tail, arc.head, cap, -savings);
    }

    let mut required = 0i64;
    for (v, &b) in balance.iter().enumerate().take(n) {
        if b < 0 {
            net.add_arc(source, v, -b, 0);
            required += -b;
        } else if b > 0 {
            net.add_arc(v, sink, b, 0);
        }
    }

    let sent = net.max_flow_min_cost(source, sink);
    if sent < required {
        return Err(Infeasible);
    }

    let mut arc_flow = forced;
    let mut objective = base_objective;
    for (a, slot) in arc_flow.iter_mut().enumerate() {
        if scratch.fwd[a] != usize::MAX {
            let used = net.flow_on(scratch.fwd[a]);
            *slot += used;
            objective += used * scratch.values[a];
        }
    }
    Ok(CommodityFlow { arc_flow, objective_micro: objective })
}

#[derive(Default)]
pub(crate) struct FlowScratch {
    net: Residual,
    fwd: Vec<usize>,
    values: Vec<i64>,
    zero_mask: Vec<bool>,
}

/// Residual network with paired forward/backward arcs, kept as linked
/// adjacency lists so a reset costs two fills and no allocation.
#[derive(Default)]
struct Residual {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i64>,
    installed: Vec<i64>,
    cost: Vec<i64>,
    phi: Vec<i64>,
    dist: Vec<i64>,
    parent: Vec<usize>,
    order: Vec<usize>,
    indeg: Vec<usize>,
    heap: BinaryHeap<Reverse<(i64, usize)>>,
}

const NONE: usize = usize::MAX;

impl Residual {
    fn reset(&mut self, n: usize) {
        self.head.clear();
        self.head.resize(n, NONE);
        self.next.clear();
        self.to.clear();
        self.cap.clear();
        self.installed.clear();
        self.cost.clear();
    }

    fn add_arc(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(cap);
        self.installed.push(cap);
        self.cost.push(cost);
        self.next.push(self.head[u]);
        self.head[u] = e;
        self.to.push(u);
        self.cap.push(0);
        self.installed.push(0);
        self.cost.push(-cost);
        self.next.push(self.head[v]);
        self.head[v] = e + 1;
        e
    }

    fn flow_on(&self, e: usize) -> i64 {
        self.installed[e] - self.cap[e]
    }

    /// Potentials for the initial residual graph, which is acyclic: one
    /// relaxation sweep in topological order handles the negative costs.
    fn initial_potentials(&mut self, source: usize) {
        let n = self.head.len();
        self.indeg.clear();
        self.indeg.resize(n, 0);
        for e in (0..self.to.len()).step_by(2) {
            if self.cap[e] > 0 {
                self.indeg[self.to[e]] += 1;
            }
        }
        self.order.clear();
        self.order.extend((0..n).filter(|v| self.indeg[*v] == 0));
        let mut i = 0;
        while i < self.order.len() {
            let u = self.order[i];
            i += 1;
            let mut e = self.head[u];
            while e != NONE {
                if e.is_multiple_of(2) && self.cap[e] > 0 {
                    let v = self.to[e];
                    self.indeg[v] -= 1;
                    if self.indeg[v] == 0 {
                        self.order.push(v);
                    }
                }
                e = self.next[e];
            }
        }
        assert_eq!(self.order.len(), n, "initial residual graph must be acyclic");

        self.phi.clear();
        self.phi.resize(n, INF);
        self.phi[source] = 0;
        for i in 0..n {
            let u = self.order[i];
            if self.phi[u] == INF {
                continue;
            }
            let mut e = self.head[u];
            while e != NONE {
                if e.is_multiple_of(2) && self.cap[e] > 0 {
                    let v = self.to[e];
                    self.phi[v] = self.phi[v].min(self.phi[u] + self.cost[e]);
                }
                e = self.next[e];
            }
        }
    }

    fn max_flow_min_cost(&mut self, source: usize, sink: usize) -> i64 {
        let n = self.head.len();
        self.initial_potentials(source);
        let mut total = 0i64;

        loop {
            self.dist.clear();
            self.dist.resize(n, INF);
            self.parent.clear();
            self.parent.resize(n, NONE);
            self.dist[source] = 0;
            self.heap.clear();
            self.heap.push(Reverse((0, source)));
            while let Some(Reverse((d, u))) = self.heap.pop() {
                if d > self.dist[u] {
                    continue;
                }
                let mut e = self.head[u];
                while e != NONE {
                    if self.cap[e] > 0 {
                        let v = self.to[e];
                        // Nodes unreachable at the start stay unreachable:
                        // their potentials are never consulted.
                        debug_assert!(self.phi[v] < INF);
                        let nd = d + self.cost[e] + self.phi[u] - self.phi[v];
                        if nd < self.dist[v] {
                            self.dist[v] = nd;
                            self.parent[v] = e;
                            self.heap.push(Reverse((nd, v)));
                        }
                    }
                    e = self.next[e];
                }
            }
            if self.dist[sink] == INF {
                return total;
            }

            let mut bottleneck = INF;
            let mut v = sink;
            while v != source {
                let e = self.parent[v];
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = sink;
            while v != source {
                let e = self.parent[v];
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1];
            }
            total += bottleneck;

            for v in 0..n {
                if self.dist[v] < INF {
                    self.phi[v] += self.dist[v];
                }
            }
        }
    }
}

/// One vehicle's day: the depots it leaves from and returns to, and the trips
/// it covers in order. An empty trip list is a vehicle that stayed parked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleRoute {
    pub commodity: usize,
    pub start_depot: DepotId,
    pub end_depot: DepotId,
    pub trips: Vec<TripId>,
}

impl VehicleRoute {
    pub fn is_parked(&self) -> bool {
        self.trips.is_empty()
    }
}

/// Splits an integral flow into one unit path per vehicle. Conservation plus
/// integrality on a DAG guarantee this succeeds; failure indicates a solver
/// bug. Flows are given per commodity (a single-commodity graph passes one).
pub fn extract_routes(graph: &FlowGraph, flows: &[Vec<i64>]) -> Result<Vec<VehicleRoute>, FlowError> {
    assert_eq!(flows.len(), graph.commodity_count());
    let mut routes = Vec::new();
    let mut out_arcs: Vec<Vec<ArcId>> = vec![Vec::new(); graph.nodes.len()];
    for (a, arc) in graph.arcs.iter().enumerate() {
        out_arcs[arc.tail].push(a);
    }

    for (k, flow) in flows.iter().enumerate() {
        let mut remaining = flow.clone();
        let mut absorb: Vec<i64> =
            graph.balance[k].iter().map(|b| if *b > 0 { *b } else { 0 }).collect();
        for start in 0..graph.nodes.len() {
            let mut units = -graph.balance[k][start].min(0);
            while units > 0 {
                units -= 1;
                let mut route = VehicleRoute {
                    commodity: k,
                    start_depot: DepotId(u32::MAX),
                    end_depot: DepotId(u32::MAX),
                    trips: Vec::new(),
                };
                let mut at = start;
                loop {
                    match graph.nodes[at] {
                        NodeKind::DepotStart { depot, .. } => route.start_depot = depot,
                        NodeKind::DepotEnd { depot, .. } => route.end_depot = depot,
                        _ => {}
                    }
                    // lowest arc id first, for reproducible decompositions
                    let next = out_arcs[at].iter().copied().find(|a| remaining[*a] > 0);
                    match next {
                        Some(a) => {
                            remaining[a] -= 1;
                            if let ArcKind::Trip(t) = graph.arcs[a].kind {
                                route.trips.push(t);
                            }
                            at = graph.arcs[a].head;
                        }
                        None => {
                            if absorb[at] > 0 {
                                absorb[at] -= 1;
                                break;
                            }
                            return Err(FlowError::DecompositionFailure(at));
                        }
                    }
                }
                routes.push(route);
            }
        }
    }
    Ok(routes)
}

/// Mean number of trips on routes that actually left the depot.
pub fn trips_per_used_vehicle(routes: &[VehicleRoute], commodity: usize) -> Option<f64> {
    let used: Vec<&VehicleRoute> =
        routes.iter().filter(|r| r.commodity == commodity && !r.is_parked()).collect();
    if used.is_empty() {
        return None;
    }
    let trips: usize = used.iter().map(|r| r.trips.len()).sum();
    Some(trips as f64 / used.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FlowArc, micro_eur};
    use crate::mot::Mot;

    /// Hand-built single-commodity graph: two depots, two trips with given
    /// savings (euros), optionally chained by a connection arc.
    fn two_trip_graph(s0: f64, s1: f64, connected: bool, vehicles: i64) -> FlowGraph {
        let nodes = vec![
            NodeKind::DepotStart { depot: DepotId(0), commodity: 0 }, // 0
            NodeKind::TripStart(TripId(0)),                           // 1
            NodeKind::TripEnd(TripId(0)),                             // 2
            NodeKind::TripStart(TripId(1)),                           // 3
            NodeKind::TripEnd(TripId(1)),                             // 4
            NodeKind::DepotEnd { depot: DepotId(0), commodity: 0 },   // 5
        ];
        let mut arcs = vec![
            FlowArc {
                tail: 0,
                head: 5,
                capacity: vehicles,
                savings_micro: vec![Some(0)],
                kind: ArcKind::DepotBypass(DepotId(0)),
            },
            FlowArc {
                tail: 0,
                head: 1,
                capacity: 1,
                savings_micro: vec![Some(0)],
                kind: ArcKind::DepotAccess,
            },
            FlowArc {
                tail: 1,
                head: 2,
                capacity: 1,
                savings_micro: vec![Some(micro_eur(s0))],
                kind: ArcKind::Trip(TripId(0)),
            },
            FlowArc {
                tail: 2,
                head: 5,
                capacity: 1,
                savings_micro: vec![Some(0)],
                kind: ArcKind::DepotAccess,
            },
            FlowArc {
                tail: 0,
                head: 3,
                capacity: 1,
                savings_micro: vec![Some(0)],
                kind: ArcKind::DepotAccess,
            },
            FlowArc {
                tail: 3,
                head: 4,
                capacity: 1,
                savings_micro: vec![Some(micro_eur(s1))],
                kind: ArcKind::Trip(TripId(1)),
            },
            FlowArc {
                tail: 4,
                head: 5,
                capacity: 1,
                savings_micro: vec![Some(0)],
                kind: ArcKind::DepotAccess,
            },
        ];
        if connected {
            arcs.push(FlowArc {
                tail: 2,
                head: 3,
                capacity: 1,
                savings_micro: vec![Some(0)],
                kind: ArcKind::Connection { from: TripId(0), to: TripId(1) },
            });
        }
        let mut balance = vec![vec![0i64; nodes.len()]];
        balance[0][0] = -vehicles;
        balance[0][5] = vehicles;
        FlowGraph { commodities: vec![Mot::CarType1], nodes, arcs, balance }
    }

    #[test]
    fn one_vehicle_chains_two_connectable_trips() {
        let g = two_trip_graph(5.0, 3.0, true, 1);
        let flow = solve_min_cost_flow(&g);
        assert_eq!(flow.objective_micro, micro_eur(8.0));
        let routes = extract_routes(&g, &[flow.arc_flow]).unwrap();
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].trips, vec![TripId(0), TripId(1)]);
    }

    #[test]
    fn one_vehicle_without_connection_takes_best_trip() {
        let g = two_trip_graph(5.0, 3.0, false, 1);
        let flow = solve_min_cost_flow(&g);
        assert_eq!(flow.objective_micro, micro_eur(5.0));
    }

    #[test]
    fn negative_savings_leave_vehicles_parked() {
        let g = two_trip_graph(-2.0, -0.5, true, 2);
        let flow = solve_min_cost_flow(&g);
        assert_eq!(flow.objective_micro, 0);
        let routes = extract_routes(&g, &[flow.arc_flow]).unwrap();
        assert_eq!(routes.len(), 2);
        assert!(routes.iter().all(VehicleRoute::is_parked));
    }

    #[test]
    fn objective_counts_only_trip_arcs() {
        let g = two_trip_graph(5.0, 3.0, true, 2);
        let flow = solve_min_cost_flow(&g);
        let trip_sum: i64 = g
            .trip_arcs()
            .map(|(a, _)| flow.arc_flow[a] * g.arcs[a].savings_micro[0].unwrap())
            .sum();
        assert_eq!(flow.objective_micro, trip_sum);
    }

    #[test]
    fn extra_vehicles_never_hurt() {
        let mut prev = None;
        for vehicles in 1..=4 {
            let g = two_trip_graph(5.0, 3.0, false, vehicles);
            let flow = solve_min_cost_flow(&g);
            if let Some(p) = prev {
                assert!(flow.objective_micro >= p);
            }
            prev = Some(flow.objective_micro);
        }
    }

    #[test]
    fn routes_report_bypass_and_usage_split() {
        let g = two_trip_graph(5.0, 3.0, true, 2);
        let flow = solve_min_cost_flow(&g);
        let routes = extract_routes(&g, &[flow.arc_flow]).unwrap();
        assert_eq!(routes.len(), 2);
        let parked = routes.iter().filter(|r| r.is_parked()).count();
        // second vehicle has nothing left worth covering once the chain is taken
        assert_eq!(parked, 1);
        assert_eq!(trips_per_used_vehicle(&routes, 0), Some(2.0));
    }

    #[test]
    fn forced_one_restriction_pins_a_trip() {
        let g = two_trip_graph(5.0, -3.0, true, 1);
        // unrestricted: only trip 0 is covered
        let free = solve_min_cost_flow(&g);
        assert_eq!(free.objective_micro, micro_eur(5.0));
        // forcing the losing trip arc changes the optimum accordingly
        let trip1_arc = 5;
        let sol = solve_commodity(
            &g,
            0,
            ArcRestrictions { forced_one: &[trip1_arc], ..Default::default() },
        )
        .unwrap();
        assert_eq!(sol.arc_flow[trip1_arc], 1);
        assert_eq!(sol.objective_micro, micro_eur(2.0));
    }

    #[test]
    fn forced_zero_restriction_blocks_a_trip() {
        let g = two_trip_graph(5.0, 3.0, true, 1);
        let trip0_arc = 2;
        let sol = solve_commodity(
            &g,
            0,
            ArcRestrictions { forced_zero: &[trip0_arc], ..Default::default() },
        )
        .unwrap();
        assert_eq!(sol.arc_flow[trip0_arc], 0);
        assert_eq!(sol.objective_micro, micro_eur(3.0));
    }
}
