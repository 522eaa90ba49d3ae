//! Time-space network construction.
//!
//! Nodes are depot day-start/day-end nodes (one layer per commodity in the
//! multi-type case, fed by a per-commodity fleet source/sink), plus a start
//! and an end node per trip. Arcs move forward in time only, so the graph is
//! a DAG:
//!
//! * trip arcs carry the per-commodity savings of covering the trip,
//!   capacity 1 in total across commodities;
//! * connection arcs chain a trip to a later one leaving from the depot it
//!   arrived at, zero savings;
//! * depot access arcs tie trip endpoints to the matching depot nodes;
//! * a bypass arc per depot (and commodity) lets vehicles sit out the day.
//!
//! Trips a commodity cannot serve (excluded by the user or unable to meet the
//! appointments) simply have no variable for that commodity; trips no
//! commodity can serve are left out of the graph entirely.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::cost::{Savings, trip_savings};
use crate::instance::{DepotId, Instance, TripId};
use crate::mot::Mot;
use crate::schedule::{TripSchedule, schedule_trip};

pub type NodeId = usize;
pub type ArcId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Day-start depot node for one commodity layer.
    DepotStart { depot: DepotId, commodity: usize },
    /// Day-end depot node for one commodity layer.
    DepotEnd { depot: DepotId, commodity: usize },
    TripStart(TripId),
    TripEnd(TripId),
    /// Single source holding a commodity's whole fleet (multi-type only).
    FleetSource(usize),
    FleetSink(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    Trip(TripId),
    Connection { from: TripId, to: TripId },
    DepotAccess,
    DepotBypass(DepotId),
    /// Fleet source -> depot start, or depot end -> fleet sink.
    Fleet,
}

#[derive(Debug, Clone)]
pub struct FlowArc {
    pub tail: NodeId,
    pub head: NodeId,
    pub capacity: i64,
    /// Savings in integer micro-euros per commodity; `None` bars the
    /// commodity from the arc.
    pub savings_micro: Vec<Option<i64>>,
    pub kind: ArcKind,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    /// Shared modes flowing through the graph, one commodity each.
    pub commodities: Vec<Mot>,
    pub nodes: Vec<NodeKind>,
    pub arcs: Vec<FlowArc>,
    /// Required inflow minus outflow per commodity and node: negative at
    /// supply nodes, positive at demand nodes, zero elsewhere.
    pub balance: Vec<Vec<i64>>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{0} is not a shared mode")]
    NotShared(Mot),
    #[error("multi-type graph needs at least one commodity")]
    NoCommodities,
    #[error("duplicate commodity {0}")]
    DuplicateCommodity(Mot),
    #[error("fleet references unknown depot {0}")]
    UnknownDepot(DepotId),
}

pub fn micro_eur(eur: f64) -> i64 {
    (eur * 1e6).round() as i64
}

pub fn eur_from_micro(micro: i64) -> f64 {
    micro as f64 * 1e-6
}

impl FlowGraph {
    pub fn commodity_count(&self) -> usize {
        self.commodities.len()
    }

    /// Fleet size of one commodity.
    pub fn supply(&self, commodity: usize) -> i64 {
        self.balance[commodity].iter().filter(|b| **b < 0).map(|b| -*b).sum()
    }

    pub fn trip_arcs(&self) -> impl Iterator<Item = (ArcId, TripId)> + '_ {
        self.arcs.iter().enumerate().filter_map(|(i, a)| match a.kind {
            ArcKind::Trip(t) => Some((i, t)),
            _ => None,
        })
    }

    /// Arcs where more than one commodity competes for the capacity.
    pub fn is_coupled(&self, arc: ArcId) -> bool {
        self.arcs[arc].savings_micro.iter().filter(|s| s.is_some()).count() > 1
    }

    /// Topological order of the nodes; `None` if the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for a in &self.arcs {
            indeg[a.head] += 1;
            out[a.tail].push(a.head);
        }
        let mut queue: Vec<NodeId> = (0..n).filter(|v| indeg[*v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut i = 0;
        while i < queue.len() {
            let v = queue[i];
            i += 1;
            order.push(v);
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Line-oriented dump: one arc per line as
    /// `tail head capacity savings...` with `-` for a barred commodity.
    pub fn write_dump(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(
            w,
            "# commodities: {}",
            self.commodities.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(" ")
        )?;
        for (i, node) in self.nodes.iter().enumerate() {
            writeln!(w, "# node {i} {node:?}")?;
        }
        for a in &self.arcs {
            write!(w, "{} {} {}", a.tail, a.head, a.capacity)?;
            for s in &a.savings_micro {
                match s {
                    Some(v) => write!(w, " {v}")?,
                    None => write!(w, " -")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Graph for a single shared mode: depot nodes carry the per-depot vehicle
/// counts directly as supply and demand.
pub fn build_single_graph(
    instance: &Instance,
    shared: Mot,
    fleet_per_depot: &BTreeMap<DepotId, u32>,
) -> Result<FlowGraph, GraphError> {
    let fleet: BTreeMap<(Mot, DepotId), u32> =
        fleet_per_depot.iter().map(|(d, n)| ((shared, *d), *n)).collect();
    build(instance, &[shared], &fleet, false)
}

/// Graph for several shared modes: one depot layer, fleet source and fleet
/// sink per commodity; trip and connection arcs are shared and couple the
/// commodities through their unit capacity.
pub fn build_multi_graph(
    instance: &Instance,
    shared: &[Mot],
    fleet: &BTreeMap<(Mot, DepotId), u32>,
) -> Result<FlowGraph, GraphError> {
    build(instance, shared, fleet, true)
}

struct TripEntry {
    id: TripId,
    origin: DepotId,
    dest: DepotId,
    /// Per commodity: schedule and savings when the commodity can serve the
    /// trip.
    by_commodity: Vec<Option<(TripSchedule, i64)>>,
}

fn build(
    instance: &Instance,
    shared: &[Mot],
    fleet: &BTreeMap<(Mot, DepotId), u32>,
    with_fleet_nodes: bool,
) -> Result<FlowGraph, GraphError> {
    if shared.is_empty() {
        return Err(GraphError::NoCommodities);
    }
    for (i, mot) in shared.iter().enumerate() {
        if !instance.mot_table.get(*mot).shared {
            return Err(GraphError::NotShared(*mot));
        }
        if shared[..i].contains(mot) {
            return Err(GraphError::DuplicateCommodity(*mot));
        }
    }
    for (_, depot) in fleet.keys() {
        if depot.0 as usize >= instance.depots.len() {
            return Err(GraphError::UnknownDepot(*depot));
        }
    }

    let k_count = shared.len();
    let fleet_at = |k: usize, d: DepotId| -> i64 {
        fleet.get(&(shared[k], d)).copied().unwrap_or(0) as i64
    };
    let fleet_total: i64 = (0..k_count)
        .map(|k| instance.depots.iter().map(|d| fleet_at(k, d.id)).sum::<i64>())
        .sum();
    // Safe stand-in for unbounded capacity: no arc can ever carry more flow.
    let bypass_cap = fleet_total.max(1);

    // Trips any commodity can serve, in id order.
    let mut trips: Vec<TripEntry> = Vec::new();
    for trip in &instance.trips {
        let by_commodity: Vec<Option<(TripSchedule, i64)>> = shared
            .iter()
            .map(|mot| match trip_savings(instance, trip, *mot) {
                Savings::Finite(eur) => {
                    let sched = schedule_trip(instance, trip, *mot)
                        .expect("finite savings imply a feasible schedule");
                    Some((sched, micro_eur(eur)))
                }
                Savings::Ineligible => None,
            })
            .collect();
        if by_commodity.iter().any(|c| c.is_some()) {
            trips.push(TripEntry { id: trip.id, origin: trip.origin, dest: trip.dest, by_commodity });
        }
    }

    // Node layout: fleet sources, depot starts, trip start/end pairs in trip
    // id order, depot ends, fleet sinks.
    let mut nodes = Vec::new();
    let mut fleet_source = vec![0usize; k_count];
    let mut fleet_sink = vec![0usize; k_count];
    if with_fleet_nodes {
        for (k, slot) in fleet_source.iter_mut().enumerate() {
            *slot = nodes.len();
            nodes.push(NodeKind::FleetSource(k));
        }
    }
    let depot_layers = if with_fleet_nodes { k_count } else { 1 };
    let mut depot_start = vec![vec![0usize; instance.depots.len()]; depot_layers];
    let mut depot_end = vec![vec![0usize; instance.depots.len()]; depot_layers];
    for (k, layer) in depot_start.iter_mut().enumerate() {
        for d in &instance.depots {
            layer[d.id.0 as usize] = nodes.len();
            nodes.push(NodeKind::DepotStart { depot: d.id, commodity: k });
        }
    }
    let mut trip_start = Vec::with_capacity(trips.len());
    let mut trip_end = Vec::with_capacity(trips.len());
    for t in &trips {
        trip_start.push(nodes.len());
        nodes.push(NodeKind::TripStart(t.id));
        trip_end.push(nodes.len());
        nodes.push(NodeKind::TripEnd(t.id));
    }
    for (k, layer) in depot_end.iter_mut().enumerate() {
        for d in &instance.depots {
            layer[d.id.0 as usize] = nodes.len();
            nodes.push(NodeKind::DepotEnd { depot: d.id, commodity: k });
        }
    }
    if with_fleet_nodes {
        for (k, slot) in fleet_sink.iter_mut().enumerate() {
            *slot = nodes.len();
            nodes.push(NodeKind::FleetSink(k));
        }
    }

    let layer_of = |k: usize| if with_fleet_nodes { k } else { 0 };
    let only = |k: usize, v: i64| -> Vec<Option<i64>> {
        let mut s = vec![None; k_count];
        s[k] = Some(v);
        s
    };

    let mut arcs: Vec<FlowArc> = Vec::new();
    // Fleet distribution and collection arcs.
    if with_fleet_nodes {
        for k in 0..k_count {
            for d in &instance.depots {
                let cap = fleet_at(k, d.id);
                if cap == 0 {
                    continue;
                }
                arcs.push(FlowArc {
                    tail: fleet_source[k],
                    head: depot_start[k][d.id.0 as usize],
                    capacity: cap,
                    savings_micro: only(k, 0),
                    kind: ArcKind::Fleet,
                });
                arcs.push(FlowArc {
                    tail: depot_end[k][d.id.0 as usize],
                    head: fleet_sink[k],
                    capacity: cap,
                    savings_micro: only(k, 0),
                    kind: ArcKind::Fleet,
                });
            }
        }
    }
    // Bypass arcs: parked vehicles.
    for k in 0..depot_layers {
        for d in &instance.depots {
            let savings = if with_fleet_nodes {
                only(k, 0)
            } else {
                vec![Some(0); k_count]
            };
            arcs.push(FlowArc {
                tail: depot_start[k][d.id.0 as usize],
                head: depot_end[k][d.id.0 as usize],
                capacity: bypass_cap,
                savings_micro: savings,
                kind: ArcKind::DepotBypass(d.id),
            });
        }
    }
    // Per trip: depot access in, the trip arc, depot access out.
    for (i, t) in trips.iter().enumerate() {
        for (k, info) in t.by_commodity.iter().enumerate() {
            if info.is_none() {
                continue;
            }
            arcs.push(FlowArc {
                tail: depot_start[layer_of(k)][t.origin.0 as usize],
                head: trip_start[i],
                capacity: 1,
                savings_micro: only(k, 0),
                kind: ArcKind::DepotAccess,
            });
        }
        arcs.push(FlowArc {
            tail: trip_start[i],
            head: trip_end[i],
            capacity: 1,
            savings_micro: t.by_commodity.iter().map(|c| c.as_ref().map(|(_, s)| *s)).collect(),
            kind: ArcKind::Trip(t.id),
        });
        for (k, info) in t.by_commodity.iter().enumerate() {
            if info.is_none() {
                continue;
            }
            arcs.push(FlowArc {
                tail: trip_end[i],
                head: depot_end[layer_of(k)][t.dest.0 as usize],
                capacity: 1,
                savings_micro: only(k, 0),
                kind: ArcKind::DepotAccess,
            });
        }
    }
    // Connection arcs between compatible trips, in (from, to) id order.
    for (i, from) in trips.iter().enumerate() {
        for (j, to) in trips.iter().enumerate() {
            if i == j || from.dest != to.origin {
                continue;
            }
            let savings: Vec<Option<i64>> = (0..k_count)
                .map(|k| match (&from.by_commodity[k], &to.by_commodity[k]) {
                    (Some((sched_from, _)), Some((sched_to, _)))
                        if connects(sched_from, sched_to, from.id, to.id) =>
                    {
                        Some(0)
                    }
                    _ => None,
                })
                .collect();
            if savings.iter().any(|s| s.is_some()) {
                arcs.push(FlowArc {
                    tail: trip_end[i],
                    head: trip_start[j],
                    capacity: 1,
                    savings_micro: savings,
                    kind: ArcKind::Connection { from: from.id, to: to.id },
                });
            }
        }
    }

    // Balances: supplies at depot starts (single) or fleet sources (multi).
    let mut balance = vec![vec![0i64; nodes.len()]; k_count];
    for k in 0..k_count {
        if with_fleet_nodes {
            let total: i64 = instance.depots.iter().map(|d| fleet_at(k, d.id)).sum();
            balance[k][fleet_source[k]] = -total;
            balance[k][fleet_sink[k]] = total;
        } else {
            for d in &instance.depots {
                let count = fleet_at(k, d.id);
                balance[k][depot_start[0][d.id.0 as usize]] = -count;
                balance[k][depot_end[0][d.id.0 as usize]] = count;
            }
        }
    }

    Ok(FlowGraph { commodities: shared.to_vec(), nodes, arcs, balance })
}

/// Zero-slack handover: a vehicle can roll from `a` into `b` when `a` is back
/// at the depot no later than `b` leaves. Trips collapsed to a single instant
/// are ordered by id so boundary ties cannot close a cycle.
fn connects(a: &TripSchedule, b: &TripSchedule, a_id: TripId, b_id: TripId) -> bool {
    if a.end_min < b.start_min {
        return true;
    }
    if a.end_min > b.start_min {
        return false;
    }
    let a_degenerate = a.start_min == a.end_min;
    let b_degenerate = b.start_min == b.end_min;
    if a_degenerate && b_degenerate { a_id < b_id } else { true }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::instance::{Depot, Point, Task, Trip, UserId};
    use crate::mot::{CostConfig, MotTable};
    use std::collections::BTreeSet;

    /// Two depots on the x axis, one user, trips laid out by (origin, dest,
    /// task time) triples. Task locations sit on the segment between depots.
    pub(crate) fn grid_instance(specs: &[(u32, u32, f64)]) -> Instance {
        let all: BTreeSet<Mot> = Mot::ALL.into_iter().collect();
        let depots = vec![
            Depot {
                id: DepotId(0),
                location: Point { x_km: 0.0, y_km: 0.0 },
                supply: BTreeMap::new(),
            },
            Depot {
                id: DepotId(1),
                location: Point { x_km: 8.0, y_km: 0.0 },
                supply: BTreeMap::new(),
            },
        ];
        let trips = specs
            .iter()
            .enumerate()
            .map(|(i, (origin, dest, at))| Trip {
                id: TripId(i as u32),
                user: UserId(0),
                origin: DepotId(*origin),
                dest: DepotId(*dest),
                tasks: vec![Task {
                    location: Point { x_km: 4.0, y_km: 2.0 },
                    latest_arrival_min: *at,
                    duration_min: 45.0,
                }],
                allowed_mots: all.clone(),
            })
            .collect();
        Instance {
            seed: 0,
            depots,
            users: vec![crate::instance::User {
                id: UserId(0),
                allowed_mots: all.clone(),
                home_depot: DepotId(0),
            }],
            trips,
            mot_table: MotTable::standard(),
            cost_config: CostConfig::default(),
        }
    }

    fn fleet(counts: &[(u32, u32)]) -> BTreeMap<DepotId, u32> {
        counts.iter().map(|(d, n)| (DepotId(*d), *n)).collect()
    }

    #[test]
    fn five_trip_two_depot_structure() {
        // Figure-style layout: five trips, two vehicles at depot 0, one at
        // depot 1; times far enough apart that every same-depot pair chains.
        let inst = grid_instance(&[
            (0, 0, 480.0),
            (0, 1, 540.0),
            (1, 1, 760.0),
            (0, 0, 900.0),
            (1, 0, 1020.0),
        ]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2), (1, 1)])).unwrap();

        assert_eq!(g.commodities, vec![Mot::CarType1]);
        // 2 depot starts + 2 ends + 5 trip pairs
        assert_eq!(g.nodes.len(), 4 + 10);
        assert_eq!(g.trip_arcs().count(), 5);
        let bypass = g.arcs.iter().filter(|a| matches!(a.kind, ArcKind::DepotBypass(_))).count();
        assert_eq!(bypass, 2);
        // supply -2 at depot 0 start, -1 at depot 1 start, mirrored demands
        assert_eq!(g.balance[0].iter().filter(|b| **b < 0).sum::<i64>(), -3);
        assert_eq!(g.balance[0].iter().filter(|b| **b > 0).sum::<i64>(), 3);
        assert!(g.topo_order().is_some());
    }

    #[test]
    fn empty_instance_keeps_only_bypass_arcs() {
        let inst = grid_instance(&[]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2), (1, 1)])).unwrap();
        assert!(g.arcs.iter().all(|a| matches!(a.kind, ArcKind::DepotBypass(_))));
        assert_eq!(g.arcs.len(), 2);
    }

    #[test]
    fn exactly_one_connection_for_a_compatible_pair() {
        // trip 0 ends at depot 0 well before trip 1 starts there; the reverse
        // direction is impossible.
        let inst = grid_instance(&[(0, 0, 480.0), (0, 1, 900.0)]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let connections: Vec<_> = g
            .arcs
            .iter()
            .filter_map(|a| match a.kind {
                ArcKind::Connection { from, to } => Some((from, to)),
                _ => None,
            })
            .collect();
        assert_eq!(connections, vec![(TripId(0), TripId(1))]);
    }

    #[test]
    fn trip_arc_savings_match_recomputed_trip_savings() {
        let inst = grid_instance(&[(0, 0, 480.0), (0, 1, 700.0), (1, 0, 980.0)]);
        let g = build_single_graph(&inst, Mot::CarType2, &fleet(&[(0, 1), (1, 1)])).unwrap();
        for (arc, trip) in g.trip_arcs() {
            let expected = match trip_savings(&inst, inst.trip(trip), Mot::CarType2) {
                Savings::Finite(eur) => micro_eur(eur),
                Savings::Ineligible => panic!("trip in graph must be eligible"),
            };
            assert_eq!(g.arcs[arc].savings_micro[0], Some(expected));
        }
    }

    #[test]
    fn connection_arcs_never_go_backwards_in_time() {
        let inst = grid_instance(&[
            (0, 0, 480.0),
            (0, 0, 620.0),
            (0, 1, 800.0),
            (1, 0, 950.0),
            (0, 0, 1100.0),
        ]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2)])).unwrap();
        for a in &g.arcs {
            if let ArcKind::Connection { from, to } = a.kind {
                let s_from = schedule_trip(&inst, inst.trip(from), Mot::CarType1).unwrap();
                let s_to = schedule_trip(&inst, inst.trip(to), Mot::CarType1).unwrap();
                assert!(s_from.end_min <= s_to.start_min);
            }
        }
    }

    #[test]
    fn schedule_infeasible_trips_are_omitted() {
        // Second task is unreachable even by car, so no mode can serve the
        // trip and it must vanish from the graph.
        let mut inst = grid_instance(&[(0, 0, 480.0)]);
        inst.trips[0].tasks.push(Task {
            location: Point { x_km: 30.0, y_km: 30.0 },
            latest_arrival_min: 526.0,
            duration_min: 10.0,
        });
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        assert_eq!(g.trip_arcs().count(), 0);
    }

    #[test]
    fn excluded_mode_trips_are_omitted_from_single_graph() {
        let mut inst = grid_instance(&[(0, 0, 480.0), (0, 0, 700.0)]);
        let no_cars: BTreeSet<Mot> =
            [Mot::Walk, Mot::Bike, Mot::PublicTransport, Mot::Taxi].into_iter().collect();
        inst.trips[1].allowed_mots = no_cars;
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let ids: Vec<TripId> = g.trip_arcs().map(|(_, t)| t).collect();
        assert_eq!(ids, vec![TripId(0)]);
    }

    #[test]
    fn multi_graph_fleet_arcs_carry_depot_split() {
        let inst = grid_instance(&[(0, 0, 480.0), (0, 1, 700.0), (1, 1, 950.0)]);
        let mut fleet = BTreeMap::new();
        fleet.insert((Mot::CarType1, DepotId(0)), 2u32);
        fleet.insert((Mot::CarType1, DepotId(1)), 1);
        fleet.insert((Mot::CarType2, DepotId(0)), 3);
        fleet.insert((Mot::CarType2, DepotId(1)), 4);
        let g = build_multi_graph(&inst, &[Mot::CarType1, Mot::CarType2], &fleet).unwrap();

        assert_eq!(g.commodity_count(), 2);
        assert_eq!(g.supply(0), 3);
        assert_eq!(g.supply(1), 7);
        let source_caps: Vec<i64> = g
            .arcs
            .iter()
            .filter(|a| {
                a.kind == ArcKind::Fleet && matches!(g.nodes[a.tail], NodeKind::FleetSource(_))
            })
            .map(|a| a.capacity)
            .collect();
        assert_eq!(source_caps, vec![2, 1, 3, 4]);
        // one source and one sink per commodity
        for k in 0..2 {
            assert_eq!(g.nodes.iter().filter(|n| **n == NodeKind::FleetSource(k)).count(), 1);
            assert_eq!(g.nodes.iter().filter(|n| **n == NodeKind::FleetSink(k)).count(), 1);
        }
        assert!(g.topo_order().is_some());
        // trip arcs are the coupled ones
        for (arc, _) in g.trip_arcs() {
            assert!(g.is_coupled(arc));
        }
    }

    #[test]
    fn rejects_non_shared_mode() {
        let inst = grid_instance(&[(0, 0, 480.0)]);
        assert!(matches!(
            build_single_graph(&inst, Mot::Taxi, &fleet(&[(0, 1)])),
            Err(GraphError::NotShared(Mot::Taxi))
        ));
    }

    #[test]
    fn multi_graph_with_one_commodity_matches_single_graph_optimum() {
        let inst = grid_instance(&[(0, 0, 480.0), (0, 1, 700.0), (1, 0, 950.0), (1, 1, 620.0)]);
        let single = build_single_graph(
            &inst,
            Mot::CarType1,
            &fleet(&[(0, 1), (1, 1)]),
        )
        .unwrap();
        let mut mfleet = BTreeMap::new();
        mfleet.insert((Mot::CarType1, DepotId(0)), 1u32);
        mfleet.insert((Mot::CarType1, DepotId(1)), 1u32);
        let multi = build_multi_graph(&inst, &[Mot::CarType1], &mfleet).unwrap();

        let single_obj = crate::mincost::solve_min_cost_flow(&single).objective_micro;
        let multi_sol = crate::multicommodity::solve_multicommodity(&multi);
        assert_eq!(multi_sol.objective_micro, single_obj);
        assert_eq!(multi_sol.bound_gap_micro, 0);
    }

    #[test]
    fn identical_commodities_match_pooled_single_fleet() {
        // make the second car type a copy of the first, then a split fleet
        // must achieve exactly what the pooled fleet achieves
        let mut inst = grid_instance(&[(0, 0, 480.0), (0, 0, 700.0), (1, 1, 600.0), (0, 1, 930.0)]);
        let mut rows = inst.mot_table.rows().to_vec();
        let car1 = rows.iter().find(|r| r.mode == Mot::CarType1).unwrap().clone();
        for row in &mut rows {
            if row.mode == Mot::CarType2 {
                row.sloping_factor = car1.sloping_factor;
                row.emissions_g_per_km = car1.emissions_g_per_km;
                row.speed_kmh = car1.speed_kmh;
                row.cost_per_km = car1.cost_per_km;
                row.setup_min = car1.setup_min;
            }
        }
        inst.mot_table = crate::mot::MotTable::from_rows(rows).unwrap();

        let pooled =
            build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2), (1, 2)])).unwrap();
        let pooled_obj = crate::mincost::solve_min_cost_flow(&pooled).objective_micro;

        let mut mfleet = BTreeMap::new();
        for mot in [Mot::CarType1, Mot::CarType2] {
            for d in [DepotId(0), DepotId(1)] {
                mfleet.insert((mot, d), 1u32);
            }
        }
        let multi = build_multi_graph(&inst, &[Mot::CarType1, Mot::CarType2], &mfleet).unwrap();
        let multi_sol = crate::multicommodity::solve_multicommodity(&multi);
        assert_eq!(multi_sol.objective_micro, pooled_obj);
        assert_eq!(multi_sol.bound_gap_micro, 0);

        let oracle = crate::oracle::oracle_solve(&multi).unwrap();
        assert_eq!(oracle.objective_micro, multi_sol.objective_micro);
    }

    fn pruned_unprofitable(g: &FlowGraph) -> FlowGraph {
        let mut pruned = g.clone();
        for arc in &mut pruned.arcs {
            if matches!(arc.kind, ArcKind::Trip(_)) && arc.savings_micro[0] <= Some(0) {
                arc.savings_micro[0] = None;
            }
        }
        pruned
    }

    #[test]
    fn dropping_unprofitable_trip_arcs_never_helps() {
        for seed in [3u64, 8, 21] {
            let inst = crate::generator::generate_instance(seed, 6, &Default::default()).unwrap();
            let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2), (1, 1)])).unwrap();
            let full = crate::mincost::solve_min_cost_flow(&g).objective_micro;
            let slim = crate::mincost::solve_min_cost_flow(&pruned_unprofitable(&g)).objective_micro;
            assert!(slim <= full, "seed {seed}: pruning raised the optimum");
            assert!(slim >= 0, "seed {seed}");
        }
    }

    #[test]
    fn dropping_unprofitable_trip_arcs_is_neutral_at_a_single_depot() {
        // with one depot every trip start is reachable directly, so a
        // losing trip can never be a necessary stepping stone
        let cfg = crate::generator::GenConfig { num_depots: 1, ..Default::default() };
        for seed in [2u64, 9, 33] {
            let inst = crate::generator::generate_instance(seed, 6, &cfg).unwrap();
            let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 2)])).unwrap();
            let full = crate::mincost::solve_min_cost_flow(&g).objective_micro;
            let slim = crate::mincost::solve_min_cost_flow(&pruned_unprofitable(&g)).objective_micro;
            assert_eq!(full, slim, "seed {seed}");
        }
    }

    #[test]
    fn losing_trips_can_bridge_a_vehicle_to_a_profitable_depot() {
        // trip 0 loses money (setup-dominated short hop) but carries the only
        // vehicle from depot 0 to depot 1, where trip 1 pays off handsomely;
        // covering both beats covering nothing, and pruning trip 0 strands
        // the profit. The exhaustive oracle confirms the solver on both.
        let all: BTreeSet<Mot> = Mot::ALL.into_iter().collect();
        let depots = vec![
            Depot {
                id: DepotId(0),
                location: Point { x_km: 0.0, y_km: 0.0 },
                supply: BTreeMap::new(),
            },
            Depot {
                id: DepotId(1),
                location: Point { x_km: 8.0, y_km: 0.0 },
                supply: BTreeMap::new(),
            },
        ];
        let trips = vec![
            Trip {
                id: TripId(0),
                user: UserId(0),
                origin: DepotId(0),
                dest: DepotId(1),
                tasks: vec![Task {
                    location: Point { x_km: 0.0, y_km: 0.0 },
                    latest_arrival_min: 480.0,
                    duration_min: 45.0,
                }],
                allowed_mots: all.clone(),
            },
            Trip {
                id: TripId(1),
                user: UserId(0),
                origin: DepotId(1),
                dest: DepotId(0),
                tasks: vec![Task {
                    location: Point { x_km: 18.0, y_km: 6.0 },
                    latest_arrival_min: 900.0,
                    duration_min: 45.0,
                }],
                allowed_mots: all.clone(),
            },
        ];
        let inst = Instance {
            seed: 0,
            depots,
            users: vec![crate::instance::User {
                id: UserId(0),
                allowed_mots: all,
                home_depot: DepotId(0),
            }],
            trips,
            mot_table: crate::mot::MotTable::standard(),
            cost_config: Default::default(),
        };

        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let bridge = g
            .trip_arcs()
            .find(|(_, t)| *t == TripId(0))
            .map(|(a, _)| g.arcs[a].savings_micro[0].unwrap())
            .unwrap();
        assert!(bridge < 0, "bridge trip must lose money, got {bridge}");

        let full = crate::mincost::solve_min_cost_flow(&g).objective_micro;
        let oracle = crate::oracle::oracle_solve(&g).unwrap();
        assert_eq!(full, oracle.objective_micro);
        assert!(full > 0, "covering both trips must pay off");

        let slim = crate::mincost::solve_min_cost_flow(&pruned_unprofitable(&g)).objective_micro;
        let slim_oracle = crate::oracle::oracle_solve(&pruned_unprofitable(&g)).unwrap();
        assert_eq!(slim, slim_oracle.objective_micro);
        assert!(slim < full);
    }

    #[test]
    fn dump_lists_every_arc_once() {
        let inst = grid_instance(&[(0, 0, 480.0), (0, 0, 700.0)]);
        let g = build_single_graph(&inst, Mot::CarType1, &fleet(&[(0, 1)])).unwrap();
        let mut buf = Vec::new();
        g.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let arc_lines = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(arc_lines, g.arcs.len());
    }
}
