//! Integer multi-commodity solver.
//!
//! Relaxing the joint arc capacities splits the problem into one min-cost
//! flow per commodity; the sum of their optima is an upper bound. Two
//! refinements keep the search tree small at fleet scale:
//!
//! * prices on the coupled arcs, tuned by a few subgradient steps per node,
//!   tighten the decomposition bound towards the LP dual;
//! * every relaxation solution is repaired into a feasible incumbent by
//!   letting the commodities claim capacity sequentially.
//!
//! Commodities with identical savings (the time-only objective makes the two
//! car types indistinguishable) skip the search entirely: the pooled
//! single-flow optimum is achievable exactly by recoloring its routes, and
//! both bound and incumbent coincide.
//!
//! Branching fixes the most violated coupled arc to one of the commodities
//! using it, or forbids them all; node selection is best-bound-first with
//! deterministic tie-breaks, so identical inputs replay identical searches.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::collections::BinaryHeap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::graph::{ArcId, ArcKind, FlowGraph, NodeKind};
use crate::instance::DepotId;
use crate::mincost::{ArcRestrictions, FlowScratch, solve_commodity, solve_view, solve_view_scratch};
use crate::validate::validate_flows;

/// Branching decision on one (commodity, arc) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcFix {
    Zero,
    One,
}

/// Partial assignment accumulated along a branch.
pub type FixSet = BTreeMap<(usize, ArcId), ArcFix>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Bound gap closed to zero.
    Optimal,
    /// Node or wall-clock budget exhausted; the result carries the best
    /// incumbent and its remaining gap.
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct SearchLimits {
    pub max_nodes: u64,
    pub time_budget: Duration,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self { max_nodes: 1_000_000, time_budget: Duration::from_secs(120) }
    }
}

/// Integral per-commodity flows with the proven bound gap (zero at
/// optimality).
#[derive(Debug, Clone)]
pub struct MultiFlow {
    pub arc_flow: Vec<Vec<i64>>,
    pub objective_micro: i64,
    pub bound_gap_micro: i64,
    pub status: SolveStatus,
    pub nodes_explored: u64,
}

#[derive(Debug, Error)]
#[error("arc fixes strand supply for commodity {commodity}")]
pub struct RelaxationInfeasible {
    pub commodity: usize,
}

/// Open search node; the bound is inherited from the parent's relaxation
/// until the node is evaluated itself.
#[derive(Debug, Clone)]
pub struct BnbNode {
    pub fixes: FixSet,
    pub upper_bound: i64,
    pub depth: u32,
    id: u64,
    prices: Arc<Vec<i64>>,
}

impl PartialEq for BnbNode {
    fn eq(&self, other: &Self) -> bool {
        self.upper_bound == other.upper_bound && self.id == other.id
    }
}
impl Eq for BnbNode {}
impl Ord for BnbNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // best bound first; on ties dive deep, then take the oldest node
        self.upper_bound
            .cmp(&other.upper_bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}
impl PartialOrd for BnbNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn restrictions_for(fixes: &FixSet, commodity: usize) -> (Vec<ArcId>, Vec<ArcId>) {
    let mut zero = Vec::new();
    let mut one = Vec::new();
    for (&(k, arc), fix) in fixes {
        if k == commodity {
            match fix {
                ArcFix::Zero => zero.push(arc),
                ArcFix::One => one.push(arc),
            }
        }
    }
    (zero, one)
}

fn solve_all(
    graph: &FlowGraph,
    fixes: &FixSet,
) -> Result<(i64, Vec<Vec<i64>>), RelaxationInfeasible> {
    let mut flows = Vec::with_capacity(graph.commodity_count());
    let mut bound = 0i64;
    for k in 0..graph.commodity_count() {
        let (zero, one) = restrictions_for(fixes, k);
        let restr = ArcRestrictions { forced_zero: &zero, forced_one: &one, cap_override: None };
        match solve_commodity(graph, k, restr) {
            Ok(sol) => {
                bound += sol.objective_micro;
                flows.push(sol.arc_flow);
            }
            Err(_) => return Err(RelaxationInfeasible { commodity: k }),
        }
    }
    Ok((bound, flows))
}

/// Upper bound from relaxing the joint capacities with all prices at zero:
/// the sum of independent per-commodity optima under the given fixes.
pub fn relaxation_bound(graph: &FlowGraph, fixes: &FixSet) -> Result<i64, RelaxationInfeasible> {
    debug_assert!(fixes_consistent(graph, fixes), "conflicting forced-one fixes");
    solve_all(graph, fixes).map(|(bound, _)| bound)
}

fn fixes_consistent(graph: &FlowGraph, fixes: &FixSet) -> bool {
    let mut ones: BTreeMap<ArcId, i64> = BTreeMap::new();
    for (&(_, arc), fix) in fixes {
        if *fix == ArcFix::One {
            *ones.entry(arc).or_insert(0) += 1;
        }
    }
    ones.iter().all(|(arc, n)| *n <= graph.arcs[*arc].capacity)
}

fn coupling_violations(graph: &FlowGraph, flows: &[Vec<i64>]) -> Vec<(ArcId, i64)> {
    let mut out = Vec::new();
    for (a, arc) in graph.arcs.iter().enumerate() {
        let joint: i64 = flows.iter().map(|f| f[a]).sum();
        if joint > arc.capacity {
            out.push((a, joint - arc.capacity));
        }
    }
    out
}

fn true_objective(graph: &FlowGraph, flows: &[Vec<i64>]) -> i64 {
    crate::validate::objective_micro(graph, flows)
}

/// Branch arc: largest joint-capacity violation, ties broken towards the
/// highest savings at stake and then the lowest arc id.
fn pick_branch_arc(graph: &FlowGraph, flows: &[Vec<i64>], violations: &[(ArcId, i64)]) -> ArcId {
    let mut best: Option<(i64, i64, ArcId)> = None;
    for &(arc, excess) in violations {
        let stake = (0..flows.len())
            .filter(|k| flows[*k][arc] > 0)
            .filter_map(|k| graph.arcs[arc].savings_micro[k])
            .max()
            .unwrap_or(0);
        let better = match best {
            None => true,
            Some((e, s, a)) => (excess, stake) > (e, s) || ((excess, stake) == (e, s) && arc < a),
        };
        if better {
            best = Some((excess, stake, arc));
        }
    }
    best.expect("violations must be non-empty").2
}

fn merged(base: &FixSet, additions: &[((usize, ArcId), ArcFix)]) -> Option<FixSet> {
    let mut out = base.clone();
    for &(key, fix) in additions {
        match out.get(&key) {
            Some(existing) if *existing != fix => return None,
            _ => {
                out.insert(key, fix);
            }
        }
    }
    Some(out)
}

struct Incumbent {
    value: i64,
    flows: Vec<Vec<i64>>,
}

impl Incumbent {
    fn offer(&mut self, value: i64, flows: Vec<Vec<i64>>) -> bool {
        if value > self.value {
            self.value = value;
            self.flows = flows;
            true
        } else {
            false
        }
    }
}

/// One node's relaxation work: a few subgradient steps on the coupled arc
/// prices, harvesting incumbents along the way.
struct NodeEvaluation {
    bound: i64,
    /// A violated relaxation solution to branch on; `None` when the node was
    /// closed (bound reached the incumbent or fixes infeasible).
    branch_flows: Option<Vec<Vec<i64>>>,
    prices: Vec<i64>,
}

struct Searcher<'a> {
    graph: &'a FlowGraph,
    coupled: Vec<ArcId>,
    scratch: FlowScratch,
}

impl<'a> Searcher<'a> {
    fn new(graph: &'a FlowGraph) -> Self {
        let coupled: Vec<ArcId> =
            (0..graph.arcs.len()).filter(|a| graph.is_coupled(*a)).collect();
        Searcher { graph, coupled, scratch: FlowScratch::default() }
    }

    fn priced_solve(&mut self, fixes: &FixSet, prices: &[i64]) -> Option<(i64, Vec<Vec<i64>>)> {
        let graph = self.graph;
        let mut flows = Vec::with_capacity(graph.commodity_count());
        let mut value = 0i64;
        for k in 0..graph.commodity_count() {
            let (zero, one) = restrictions_for(fixes, k);
            let restr =
                ArcRestrictions { forced_zero: &zero, forced_one: &one, cap_override: None };
            let sol = solve_view_scratch(
                graph,
                &|a| graph.arcs[a].savings_micro[k].map(|s| s - prices[a]),
                &graph.balance[k],
                restr,
                &mut self.scratch,
            )
            .ok()?;
            value += sol.objective_micro;
            flows.push(sol.arc_flow);
        }
        let price_mass: i64 =
            self.coupled.iter().map(|&a| prices[a] * graph.arcs[a].capacity).sum();
        Some((value + price_mass, flows))
    }

    /// Feasible solution from the relaxation: commodities claim capacity in
    /// the given order, then each gets one improvement pass against the
    /// others' final usage.
    fn sequential_incumbent(
        &mut self,
        fixes: &FixSet,
        order: &[usize],
    ) -> Option<(i64, Vec<Vec<i64>>)> {
        let graph = self.graph;
        let mut caps: Vec<i64> = graph.arcs.iter().map(|a| a.capacity).collect();
        let mut flows = vec![Vec::new(); graph.commodity_count()];
        for &k in order {
            let (zero, one) = restrictions_for(fixes, k);
            let restr = ArcRestrictions {
                forced_zero: &zero,
                forced_one: &one,
                cap_override: Some(&caps),
            };
            let sol = solve_commodity_scratch(graph, k, restr, &mut self.scratch).ok()?;
            for (a, used) in sol.arc_flow.iter().enumerate() {
                caps[a] -= used;
            }
            flows[k] = sol.arc_flow;
        }
        // one alternation round: re-optimize each commodity in what the
        // others left over
        for &k in order {
            for (a, used) in flows[k].iter().enumerate() {
                caps[a] += used;
            }
            let (zero, one) = restrictions_for(fixes, k);
            let restr = ArcRestrictions {
                forced_zero: &zero,
                forced_one: &one,
                cap_override: Some(&caps),
            };
            let sol = solve_commodity_scratch(graph, k, restr, &mut self.scratch).ok()?;
            for (a, used) in sol.arc_flow.iter().enumerate() {
                caps[a] -= used;
            }
            flows[k] = sol.arc_flow;
        }
        Some((true_objective(graph, &flows), flows))
    }

    /// Feasible solution coordinated with a priced relaxation solution: one
    /// commodity keeps its (nearly conflict-free) flow, the others re-solve
    /// in the remaining capacity.
    fn repair_keeping(
        &mut self,
        fixes: &FixSet,
        flows: &[Vec<i64>],
        keep: usize,
    ) -> Option<(i64, Vec<Vec<i64>>)> {
        let graph = self.graph;
        let mut caps: Vec<i64> = graph.arcs.iter().map(|a| a.capacity).collect();
        let mut out = vec![Vec::new(); graph.commodity_count()];
        for (a, used) in flows[keep].iter().enumerate() {
            caps[a] -= used;
        }
        out[keep] = flows[keep].clone();
        let others: Vec<usize> = (0..graph.commodity_count()).filter(|k| *k != keep).collect();
        for k in others {
            let (zero, one) = restrictions_for(fixes, k);
            let restr = ArcRestrictions {
                forced_zero: &zero,
                forced_one: &one,
                cap_override: Some(&caps),
            };
            let sol = solve_commodity_scratch(graph, k, restr, &mut self.scratch).ok()?;
            for (a, used) in sol.arc_flow.iter().enumerate() {
                caps[a] -= used;
            }
            out[k] = sol.arc_flow;
        }
        Some((true_objective(graph, &out), out))
    }

    /// Evaluate a node: refine prices, collect incumbents, and either close
    /// the node or hand back flows to branch on.
    fn evaluate(
        &mut self,
        fixes: &FixSet,
        start_prices: &[i64],
        iterations: usize,
        thorough: bool,
        incumbent: &mut Incumbent,
    ) -> Option<NodeEvaluation> {
        let graph = self.graph;
        let mut prices = start_prices.to_vec();
        let mut bound = i64::MAX / 4;
        let mut best_prices = prices.clone();
        let mut best_flows: Option<Vec<Vec<i64>>> = None;
        let mut theta = 1.0f64;
        let mut stalled = 0u32;

        if thorough {
            for order in orders(graph.commodity_count()) {
                if let Some((value, repaired)) = self.sequential_incumbent(fixes, &order) {
                    incumbent.offer(value, repaired);
                }
            }
        }

        for it in 0..iterations {
            let (lag_value, flows) = self.priced_solve(fixes, &prices)?;
            let improved = lag_value < bound;
            if improved {
                bound = lag_value;
                best_flows = Some(flows.clone());
                best_prices.copy_from_slice(&prices);
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 6 {
                    theta *= 0.5;
                    stalled = 0;
                }
            }

            let violations = coupling_violations(graph, &flows);
            if violations.is_empty() {
                // feasible under the true capacities; its real value may sit
                // below the priced value when priced arcs go unused
                let value = true_objective(graph, &flows);
                incumbent.offer(value, flows.clone());
            } else if improved || it == 0 {
                // the priced solutions are nearly conflict-free: anchoring a
                // commodity on them gives strong feasible solutions
                for keep in 0..graph.commodity_count() {
                    if let Some((value, repaired)) = self.repair_keeping(fixes, &flows, keep) {
                        incumbent.offer(value, repaired);
                    }
                }
            }
            if bound <= incumbent.value {
                return Some(NodeEvaluation { bound, branch_flows: None, prices: best_prices });
            }
            if it + 1 == iterations || theta < 0.01 {
                break;
            }

            // subgradient step on the coupled-capacity violations
            let mut norm_sq = 0i64;
            for &a in &self.coupled {
                let joint: i64 = flows.iter().map(|f| f[a]).sum();
                let g = joint - graph.arcs[a].capacity;
                if g > 0 || prices[a] > 0 {
                    norm_sq += g * g;
                }
            }
            if norm_sq == 0 {
                break;
            }
            let step = theta * (bound - incumbent.value) as f64 / norm_sq as f64;
            for &a in &self.coupled {
                let joint: i64 = flows.iter().map(|f| f[a]).sum();
                let g = joint - graph.arcs[a].capacity;
                if g > 0 || prices[a] > 0 {
                    let delta = (step * g as f64).round() as i64;
                    prices[a] = (prices[a] + delta).max(0);
                }
            }
        }

        // branch material must violate the true capacities; if the best
        // priced solution is feasible, fall back to the unpriced relaxation
        let branch_flows = match best_flows {
            Some(flows) if !coupling_violations(graph, &flows).is_empty() => Some(flows),
            _ => {
                let (plain_bound, flows) = self.solve_all_scratch(fixes)?;
                bound = bound.min(plain_bound);
                if coupling_violations(graph, &flows).is_empty() {
                    // unpriced and feasible: the decomposition bound is attained
                    incumbent.offer(true_objective(graph, &flows), flows);
                    return Some(NodeEvaluation {
                        bound,
                        branch_flows: None,
                        prices: best_prices,
                    });
                }
                Some(flows)
            }
        };
        if bound <= incumbent.value {
            return Some(NodeEvaluation { bound, branch_flows: None, prices: best_prices });
        }
        Some(NodeEvaluation { bound, branch_flows, prices: best_prices })
    }

    fn solve_all_scratch(&mut self, fixes: &FixSet) -> Option<(i64, Vec<Vec<i64>>)> {
        let graph = self.graph;
        let mut flows = Vec::with_capacity(graph.commodity_count());
        let mut bound = 0i64;
        for k in 0..graph.commodity_count() {
            let (zero, one) = restrictions_for(fixes, k);
            let restr =
                ArcRestrictions { forced_zero: &zero, forced_one: &one, cap_override: None };
            let sol = solve_commodity_scratch(graph, k, restr, &mut self.scratch).ok()?;
            bound += sol.objective_micro;
            flows.push(sol.arc_flow);
        }
        Some((bound, flows))
    }
}

fn solve_commodity_scratch(
    graph: &FlowGraph,
    commodity: usize,
    restrictions: ArcRestrictions<'_>,
    scratch: &mut FlowScratch,
) -> Result<crate::mincost::CommodityFlow, crate::mincost::Infeasible> {
    solve_view_scratch(
        graph,
        &|a| graph.arcs[a].savings_micro[commodity],
        &graph.balance[commodity],
        restrictions,
        scratch,
    )
}

fn orders(k_count: usize) -> Vec<Vec<usize>> {
    let forward: Vec<usize> = (0..k_count).collect();
    let mut backward = forward.clone();
    backward.reverse();
    if backward == forward { vec![forward] } else { vec![forward, backward] }
}

pub fn solve_multicommodity(graph: &FlowGraph) -> MultiFlow {
    solve_multicommodity_with(graph, &SearchLimits::default(), None)
}

pub fn solve_multicommodity_with(
    graph: &FlowGraph,
    limits: &SearchLimits,
    mut log: Option<&mut dyn Write>,
) -> MultiFlow {
    if let Some(pooled) = solve_identical_commodities(graph) {
        return pooled;
    }

    let started = Instant::now();
    let mut searcher = Searcher::new(graph);
    let root_iters = 200usize;
    let child_iters = 5usize;

    // Parked-fleet solution: feasible in any graph with bypass arcs, so the
    // search always holds an incumbent to report.
    let parked_fixes: FixSet = (0..graph.commodity_count())
        .flat_map(|k| {
            searcher.coupled.iter().filter_map(move |&a| {
                graph.arcs[a].savings_micro[k].map(|_| ((k, a), ArcFix::Zero))
            })
        })
        .collect();
    let (parked_value, parked_flows) =
        solve_all(graph, &parked_fixes).expect("parked fleet must be feasible");
    let mut incumbent = Incumbent { value: parked_value, flows: parked_flows };

    let mut heap: BinaryHeap<BnbNode> = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut nodes_explored = 0u64;
    let mut status = SolveStatus::Optimal;
    let mut gap = 0i64;

    let root_bound = match relaxation_bound(graph, &FixSet::new()) {
        Ok(b) => b,
        Err(e) => panic!("root relaxation infeasible: {e}"),
    };
    heap.push(BnbNode {
        fixes: FixSet::new(),
        upper_bound: root_bound,
        depth: 0,
        id: next_id,
        prices: Arc::new(vec![0i64; graph.arcs.len()]),
    });
    next_id += 1;

    while let Some(node) = heap.pop() {
        if node.upper_bound <= incumbent.value {
            break; // proven: nothing open can beat the incumbent
        }
        if nodes_explored >= limits.max_nodes || started.elapsed() >= limits.time_budget {
            status = SolveStatus::TimedOut;
            gap = node.upper_bound - incumbent.value;
            break;
        }
        nodes_explored += 1;

        let iterations = if node.depth == 0 { root_iters } else { child_iters };
        let thorough = node.depth == 0;
        let Some(eval) =
            searcher.evaluate(&node.fixes, &node.prices, iterations, thorough, &mut incumbent)
        else {
            continue; // fixes strand supply; prune
        };
        let bound = eval.bound.min(node.upper_bound);
        if let Some(w) = log.as_deref_mut() {
            let _ = writeln!(
                w,
                "node {} depth {} bound {} incumbent {}",
                node.id, node.depth, bound, incumbent.value
            );
        }
        let Some(flows) = eval.branch_flows else { continue };
        if bound <= incumbent.value {
            continue;
        }

        let violations = coupling_violations(graph, &flows);
        let arc = pick_branch_arc(graph, &flows, &violations);
        let using: Vec<usize> =
            (0..graph.commodity_count()).filter(|k| flows[*k][arc] > 0).collect();
        let prices = Arc::new(eval.prices);
        for &k in &using {
            let additions: Vec<((usize, ArcId), ArcFix)> = (0..graph.commodity_count())
                .map(|j| ((j, arc), if j == k { ArcFix::One } else { ArcFix::Zero }))
                .collect();
            if let Some(fixes) = merged(&node.fixes, &additions) {
                heap.push(BnbNode {
                    fixes,
                    upper_bound: bound,
                    depth: node.depth + 1,
                    id: next_id,
                    prices: Arc::clone(&prices),
                });
                next_id += 1;
            }
        }
        let forbid: Vec<((usize, ArcId), ArcFix)> =
            using.iter().map(|&k| ((k, arc), ArcFix::Zero)).collect();
        if let Some(fixes) = merged(&node.fixes, &forbid) {
            heap.push(BnbNode {
                fixes,
                upper_bound: bound,
                depth: node.depth + 1,
                id: next_id,
                prices: Arc::clone(&prices),
            });
            next_id += 1;
        }
    }

    MultiFlow {
        arc_flow: incumbent.flows,
        objective_micro: incumbent.value,
        bound_gap_micro: gap,
        status,
        nodes_explored,
    }
}

/// Exact fast path for commodities that are copies of each other: solve one
/// pooled flow over the union of the fleets and recolor its routes. With the
/// scenarios' equal per-depot splits a recoloring always exists; when the
/// split is uneven the recoloring may fail and the search runs instead.
fn solve_identical_commodities(graph: &FlowGraph) -> Option<MultiFlow> {
    let k_count = graph.commodity_count();
    if k_count < 2 {
        return None;
    }
    for arc in &graph.arcs {
        let present: Vec<i64> = arc.savings_micro.iter().flatten().copied().collect();
        if present.len() > 1 {
            // coupled arc: all commodities must be allowed at equal value
            if present.len() != k_count || present.iter().any(|s| *s != present[0]) {
                return None;
            }
        } else if present.iter().any(|s| *s != 0) {
            return None;
        }
    }
    // needs the fleet-source layering to read per-depot counts back out
    if !graph.nodes.iter().any(|n| matches!(n, NodeKind::FleetSource(_))) {
        return None;
    }

    let pooled_balance: Vec<i64> = (0..graph.nodes.len())
        .map(|v| (0..k_count).map(|k| graph.balance[k][v]).sum())
        .collect();
    let pooled = solve_view(
        graph,
        &|a| graph.arcs[a].savings_micro.iter().flatten().copied().max(),
        &pooled_balance,
        ArcRestrictions::default(),
    )
    .ok()?;

    let flows = recolor_pooled_routes(graph, &pooled.arc_flow)?;
    if validate_flows(graph, &flows).is_err() {
        return None;
    }
    debug_assert_eq!(true_objective(graph, &flows), pooled.objective_micro);
    Some(MultiFlow {
        arc_flow: flows,
        objective_micro: pooled.objective_micro,
        bound_gap_micro: 0,
        status: SolveStatus::Optimal,
        nodes_explored: 1,
    })
}

struct PooledRoute {
    start: DepotId,
    end: DepotId,
    /// Trip and connection arcs in path order; first and last are trip arcs.
    shared_arcs: Vec<ArcId>,
}

/// Splits the pooled flow into routes and hands them to the commodities so
/// that every commodity keeps its own per-depot start and end counts. Routes
/// between two depots come in balanced opposite pairs, which are recolored as
/// units; only the two-depot layout is handled, anything else falls back to
/// the search.
fn recolor_pooled_routes(graph: &FlowGraph, pooled: &[i64]) -> Option<Vec<Vec<i64>>> {
    let k_count = graph.commodity_count();
    let mut depots: Vec<DepotId> = Vec::new();
    for node in &graph.nodes {
        if let NodeKind::DepotStart { depot, .. } = node
            && !depots.contains(depot)
        {
            depots.push(*depot);
        }
    }
    if depots.len() > 2 {
        return None;
    }

    let lookup = ArcLookup::build(graph);

    // strip the pooled flow into unit routes, keeping those that carry trips
    let mut remaining = pooled.to_vec();
    let mut out_arcs: Vec<Vec<ArcId>> = vec![Vec::new(); graph.nodes.len()];
    for (a, arc) in graph.arcs.iter().enumerate() {
        out_arcs[arc.tail].push(a);
    }
    let mut routes: Vec<PooledRoute> = Vec::new();
    for start_node in 0..graph.nodes.len() {
        let mut units: i64 = (0..k_count).map(|k| -graph.balance[k][start_node].min(0)).sum();
        while units > 0 {
            units -= 1;
            let mut at = start_node;
            let mut start = None;
            let mut end = None;
            let mut shared_arcs = Vec::new();
            loop {
                match graph.nodes[at] {
                    NodeKind::DepotStart { depot, .. } if start.is_none() => start = Some(depot),
                    NodeKind::DepotEnd { depot, .. } => end = Some(depot),
                    _ => {}
                }
                let Some(&a) = out_arcs[at].iter().find(|a| remaining[**a] > 0) else { break };
                remaining[a] -= 1;
                if matches!(graph.arcs[a].kind, ArcKind::Trip(_) | ArcKind::Connection { .. }) {
                    shared_arcs.push(a);
                }
                at = graph.arcs[a].head;
            }
            if !shared_arcs.is_empty() {
                routes.push(PooledRoute { start: start?, end: end?, shared_arcs });
            }
        }
    }

    // group: same-depot loops color independently, crossing routes pair up
    let mut loops: BTreeMap<DepotId, Vec<usize>> = BTreeMap::new();
    let mut crossing: BTreeMap<(DepotId, DepotId), Vec<usize>> = BTreeMap::new();
    for (i, r) in routes.iter().enumerate() {
        if r.start == r.end {
            loops.entry(r.start).or_default().push(i);
        } else {
            crossing.entry((r.start, r.end)).or_default().push(i);
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    if !crossing.is_empty() {
        if depots.len() != 2 {
            return None;
        }
        let forward = crossing.remove(&(depots[0], depots[1])).unwrap_or_default();
        let backward = crossing.remove(&(depots[1], depots[0])).unwrap_or_default();
        if forward.len() != backward.len() || !crossing.is_empty() {
            return None;
        }
        pairs = forward.into_iter().zip(backward).collect();
    }

    let mut budget = lookup.fleet.clone();
    let mut color = vec![usize::MAX; routes.len()];
    for &(i, j) in &pairs {
        let k = (0..k_count)
            .find(|k| depots.iter().all(|d| budget.get(&(*k, *d)).copied().unwrap_or(0) >= 1))?;
        for d in &depots {
            *budget.get_mut(&(k, *d))? -= 1;
        }
        color[i] = k;
        color[j] = k;
    }
    for (depot, members) in &loops {
        for &i in members {
            let k = (0..k_count).find(|k| budget.get(&(*k, *depot)).copied().unwrap_or(0) >= 1)?;
            *budget.get_mut(&(k, *depot))? -= 1;
            color[i] = k;
        }
    }

    // rebuild per-commodity flows: a colored route runs through its own
    // layer's fleet and access arcs; leftover vehicles park on the bypass
    let mut flows = vec![vec![0i64; graph.arcs.len()]; k_count];
    let mut started: BTreeMap<(usize, DepotId), i64> = BTreeMap::new();
    for (i, r) in routes.iter().enumerate() {
        let k = color[i];
        let first = *r.shared_arcs.first()?;
        let last = *r.shared_arcs.last()?;
        *started.entry((k, r.start)).or_insert(0) += 1;
        flows[k][*lookup.fleet_out.get(&(k, r.start))?] += 1;
        flows[k][*lookup.access_in.get(&(k, graph.arcs[first].tail))?] += 1;
        for &a in &r.shared_arcs {
            flows[k][a] += 1;
        }
        flows[k][*lookup.access_out.get(&(k, graph.arcs[last].head))?] += 1;
        flows[k][*lookup.fleet_in.get(&(k, r.end))?] += 1;
    }
    for (&(k, d), &have) in &lookup.fleet {
        let parked = have - started.get(&(k, d)).copied().unwrap_or(0);
        if parked < 0 {
            return None;
        }
        if parked > 0 {
            flows[k][*lookup.fleet_out.get(&(k, d))?] += parked;
            flows[k][*lookup.bypass.get(&(k, d))?] += parked;
            flows[k][*lookup.fleet_in.get(&(k, d))?] += parked;
        }
    }
    Some(flows)
}

struct ArcLookup {
    fleet: BTreeMap<(usize, DepotId), i64>,
    fleet_out: BTreeMap<(usize, DepotId), ArcId>,
    fleet_in: BTreeMap<(usize, DepotId), ArcId>,
    bypass: BTreeMap<(usize, DepotId), ArcId>,
    /// (commodity, trip-start node) -> depot access arc into the trip.
    access_in: BTreeMap<(usize, usize), ArcId>,
    /// (commodity, trip-end node) -> depot access arc out of the trip.
    access_out: BTreeMap<(usize, usize), ArcId>,
}

impl ArcLookup {
    fn build(graph: &FlowGraph) -> Self {
        let mut fleet = BTreeMap::new();
        let mut fleet_out = BTreeMap::new();
        let mut fleet_in = BTreeMap::new();
        let mut bypass = BTreeMap::new();
        let mut access_in = BTreeMap::new();
        let mut access_out = BTreeMap::new();
        for (a, arc) in graph.arcs.iter().enumerate() {
            match arc.kind {
                ArcKind::Fleet => match (graph.nodes[arc.tail], graph.nodes[arc.head]) {
                    (NodeKind::FleetSource(k), NodeKind::DepotStart { depot, .. }) => {
                        fleet_out.insert((k, depot), a);
                        *fleet.entry((k, depot)).or_insert(0) += arc.capacity;
                    }
                    (NodeKind::DepotEnd { depot, .. }, NodeKind::FleetSink(k)) => {
                        fleet_in.insert((k, depot), a);
                    }
                    _ => {}
                },
                ArcKind::DepotBypass(depot) => {
                    if let NodeKind::DepotStart { commodity, .. } = graph.nodes[arc.tail] {
                        bypass.insert((commodity, depot), a);
                    }
                }
                ArcKind::DepotAccess => {
                    if let Some(k) = arc.savings_micro.iter().position(|s| s.is_some()) {
                        if matches!(graph.nodes[arc.tail], NodeKind::DepotStart { .. }) {
                            access_in.insert((k, arc.head), a);
                        } else {
                            access_out.insert((k, arc.tail), a);
                        }
                    }
                }
                _ => {}
            }
        }
        ArcLookup { fleet, fleet_out, fleet_in, bypass, access_in, access_out }
    }
}
