//! One experiment cell: build the graph for a model, solve it, validate the
//! flow, and recost the resulting assignment under the full cost model so
//! all models and objectives are comparable.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{TripCost, cheapest_baseline, schedulable_trip_cost, trip_cost_unrestricted};
use crate::graph::{FlowGraph, GraphError, build_multi_graph, build_single_graph, eur_from_micro};
use crate::instance::{DepotId, Instance, TripId};
use crate::mincost::{FlowError, solve_min_cost_flow, trips_per_used_vehicle};
use crate::mincost::{VehicleRoute, extract_routes};
use crate::mot::{Mot, Objective};
use crate::multicommodity::{SearchLimits, SolveStatus, solve_multicommodity_with};
use crate::validate::validate_flows;

/// Fleet policies: the two single-type shared fleets, the mixed fleet, and
/// the three no-optimization reference lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    MfC,
    MfE,
    Mmc,
    AllCar1,
    AllCar2,
    NoCar,
}

impl Model {
    pub const ALL: [Model; 6] =
        [Model::MfC, Model::MfE, Model::Mmc, Model::AllCar1, Model::AllCar2, Model::NoCar];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::MfC => "MF-C",
            Model::MfE => "MF-E",
            Model::Mmc => "MMC",
            Model::AllCar1 => "ALL-CAR1",
            Model::AllCar2 => "ALL-CAR2",
            Model::NoCar => "NO-CAR",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Model::MfC => "mf-c",
            Model::MfE => "mf-e",
            Model::Mmc => "mmc",
            Model::AllCar1 => "all-car1",
            Model::AllCar2 => "all-car2",
            Model::NoCar => "no-car",
        }
    }

    pub fn is_solved(self) -> bool {
        matches!(self, Model::MfC | Model::MfE | Model::Mmc)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Model::ALL
            .into_iter()
            .find(|m| m.cli_name().eq_ignore_ascii_case(s) || m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub model: Model,
    pub fleet: u32,
    pub objective: Objective,
    pub variant_label: String,
    pub limits: SearchLimits,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("fleet size {fleet} does not split evenly over {depots} depots")]
    UnevenDepotSplit { fleet: u32, depots: u32 },
    #[error("fleet size {fleet} does not split evenly over {types} car types and {depots} depots")]
    UnevenTypeSplit { fleet: u32, types: u32, depots: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("solver flow failed validation: {0}")]
    InvalidFlow(String),
    #[error("solver objective {solver_eur} disagrees with recosted savings {recosted_eur}")]
    ObjectiveMismatch { solver_eur: f64, recosted_eur: f64 },
    #[error("trip {0} has no feasible mode to cost it with")]
    UncostableTrip(TripId),
}

/// Costs split by who pays them, all under the base cost model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostSplit {
    pub car_type1_eur: f64,
    pub car_type2_eur: f64,
    pub other_mots_eur: f64,
}

impl CostSplit {
    pub fn total_eur(&self) -> f64 {
        self.car_type1_eur + self.car_type2_eur + self.other_mots_eur
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub model: Model,
    pub users: u32,
    pub fleet: u32,
    pub variant: String,
    pub objective: Objective,
    pub seed: u64,
    pub cost: CostSplit,
    pub cost_total_eur: f64,
    /// What the configuration saves against covering every trip with its
    /// cheapest public alternative.
    pub savings_eur: f64,
    /// The solver's own objective value (under the solve objective).
    pub objective_eur: f64,
    pub trips_per_car_type1: Option<f64>,
    pub trips_per_car_type2: Option<f64>,
    pub solve_time_s: f64,
    pub status: SolveStatus,
    pub bound_gap_eur: f64,
}

/// Everything a caller may want beyond the report row.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: SolutionReport,
    pub assignment: BTreeMap<TripId, Mot>,
    pub routes: Vec<VehicleRoute>,
    pub flows: Option<(FlowGraph, Vec<Vec<i64>>)>,
}

fn split_even(fleet: u32, parts: u32) -> Option<u32> {
    fleet.is_multiple_of(parts).then_some(fleet / parts)
}

pub fn run_scenario(instance: &Instance, spec: &ScenarioSpec) -> Result<ScenarioOutcome, ScenarioError> {
    let depots = instance.depots.len() as u32;
    let mut solve_instance = instance.clone();
    solve_instance.cost_config.objective = spec.objective;

    let (graph, flows, objective_micro, status, gap_micro, solve_time_s) = match spec.model {
        Model::MfC | Model::MfE => {
            let shared = if spec.model == Model::MfC { Mot::CarType1 } else { Mot::CarType2 };
            let per_depot = split_even(spec.fleet, depots)
                .ok_or(ScenarioError::UnevenDepotSplit { fleet: spec.fleet, depots })?;
            let fleet: BTreeMap<DepotId, u32> =
                instance.depots.iter().map(|d| (d.id, per_depot)).collect();
            let graph = build_single_graph(&solve_instance, shared, &fleet)?;
            let t0 = Instant::now();
            let flow = solve_min_cost_flow(&graph);
            let dt = t0.elapsed().as_secs_f64();
            (graph, vec![flow.arc_flow], flow.objective_micro, SolveStatus::Optimal, 0, dt)
        }
        Model::Mmc => {
            let shared = [Mot::CarType1, Mot::CarType2];
            let per_cell = split_even(spec.fleet, 2 * depots).ok_or(
                ScenarioError::UnevenTypeSplit { fleet: spec.fleet, types: 2, depots },
            )?;
            let mut fleet = BTreeMap::new();
            for mot in shared {
                for d in &instance.depots {
                    fleet.insert((mot, d.id), per_cell);
                }
            }
            let graph = build_multi_graph(&solve_instance, &shared, &fleet)?;
            let t0 = Instant::now();
            let sol = solve_multicommodity_with(&graph, &spec.limits, None);
            let dt = t0.elapsed().as_secs_f64();
            (graph, sol.arc_flow, sol.objective_micro, sol.status, sol.bound_gap_micro, dt)
        }
        Model::AllCar1 | Model::AllCar2 | Model::NoCar => {
            return reference_policy(instance, spec);
        }
    };

    if let Err(violations) = validate_flows(&graph, &flows) {
        return Err(ScenarioError::InvalidFlow(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }

    // Which trips ended up on which shared mode.
    let mut assignment: BTreeMap<TripId, Mot> = BTreeMap::new();
    for (arc_id, trip) in graph.trip_arcs() {
        for (k, flow) in flows.iter().enumerate() {
            if flow[arc_id] > 0 {
                assignment.insert(trip, graph.commodities[k]);
            }
        }
    }

    let routes = extract_routes(&graph, &flows)?;
    let trips_per_car = |mot: Mot| {
        graph
            .commodities
            .iter()
            .position(|m| *m == mot)
            .and_then(|k| trips_per_used_vehicle(&routes, k))
    };
    let trips_per_car_type1 = trips_per_car(Mot::CarType1);
    let trips_per_car_type2 = trips_per_car(Mot::CarType2);

    // Consistency gate: recosting the reported assignment under the solve
    // objective must reproduce the solver's objective through a fully
    // independent path (budget-limited incumbents included).
    let objective_eur = eur_from_micro(objective_micro);
    let recosted = objective_recost(&solve_instance, &assignment)?;
    if (recosted - objective_eur).abs() > 1e-3 {
        return Err(ScenarioError::ObjectiveMismatch {
            solver_eur: objective_eur,
            recosted_eur: recosted,
        });
    }

    let (cost, savings_eur) = base_recost(instance, &assignment)?;
    let report = SolutionReport {
        model: spec.model,
        users: instance.users.len() as u32,
        fleet: spec.fleet,
        variant: spec.variant_label.clone(),
        objective: spec.objective,
        seed: instance.seed,
        cost,
        cost_total_eur: cost.total_eur(),
        savings_eur,
        objective_eur,
        trips_per_car_type1,
        trips_per_car_type2,
        solve_time_s,
        status,
        bound_gap_eur: eur_from_micro(gap_micro),
    };
    Ok(ScenarioOutcome { report, assignment, routes, flows: Some((graph, flows)) })
}

/// ALL-CAR1 / ALL-CAR2 / NO-CAR reference lines: no fleet limit, no solving.
fn reference_policy(
    instance: &Instance,
    spec: &ScenarioSpec,
) -> Result<ScenarioOutcome, ScenarioError> {
    let mut assignment = BTreeMap::new();
    if let Some(car) = match spec.model {
        Model::AllCar1 => Some(Mot::CarType1),
        Model::AllCar2 => Some(Mot::CarType2),
        _ => None,
    } {
        for trip in &instance.trips {
            // reference lines ignore preference sets; fall back to the
            // baseline only when the car cannot make the appointments
            if crate::schedule::schedule_trip(instance, trip, car).is_some() {
                assignment.insert(trip.id, car);
            }
        }
    }
    let (cost, savings_eur) = base_recost(instance, &assignment)?;
    let report = SolutionReport {
        model: spec.model,
        users: instance.users.len() as u32,
        fleet: spec.fleet,
        variant: spec.variant_label.clone(),
        objective: spec.objective,
        seed: instance.seed,
        cost,
        cost_total_eur: cost.total_eur(),
        savings_eur,
        objective_eur: 0.0,
        trips_per_car_type1: None,
        trips_per_car_type2: None,
        solve_time_s: 0.0,
        status: SolveStatus::Optimal,
        bound_gap_eur: 0.0,
    };
    Ok(ScenarioOutcome { report, assignment, routes: Vec::new(), flows: None })
}

/// Total cost of the assignment under the base objective, split by payer,
/// plus the savings against the everything-by-baseline total.
fn base_recost(
    instance: &Instance,
    assignment: &BTreeMap<TripId, Mot>,
) -> Result<(CostSplit, f64), ScenarioError> {
    let mut base_instance = instance.clone();
    base_instance.cost_config.objective = Objective::Base;

    let mut split = CostSplit::default();
    let mut baseline_total = 0.0;
    for trip in &base_instance.trips {
        let baseline = cheapest_baseline(&base_instance, trip)
            .ok_or(ScenarioError::UncostableTrip(trip.id))?
            .1
            .total_eur();
        baseline_total += baseline;
        match assignment.get(&trip.id) {
            Some(&mot) if mot.is_car() => {
                // assigned trips were either matched inside the allowed set by
                // the solver or deliberately forced by a reference policy
                let cost = trip_cost_unrestricted(&base_instance, trip, mot).total_eur();
                match mot {
                    Mot::CarType1 => split.car_type1_eur += cost,
                    Mot::CarType2 => split.car_type2_eur += cost,
                    _ => unreachable!(),
                }
            }
            Some(&mot) => {
                let cost = match schedulable_trip_cost(&base_instance, trip, mot) {
                    TripCost::Finite(c) => c.total_eur(),
                    TripCost::Infinite => return Err(ScenarioError::UncostableTrip(trip.id)),
                };
                split.other_mots_eur += cost;
            }
            None => split.other_mots_eur += baseline,
        }
    }
    Ok((split, baseline_total - split.total_eur()))
}

/// Savings of the assignment under the instance's configured objective;
/// independent re-derivation of the solver's objective.
fn objective_recost(
    instance: &Instance,
    assignment: &BTreeMap<TripId, Mot>,
) -> Result<f64, ScenarioError> {
    let objective = instance.cost_config.objective;
    let mut total = 0.0;
    for trip in &instance.trips {
        if let Some(&mot) = assignment.get(&trip.id) {
            let baseline = cheapest_baseline(instance, trip)
                .ok_or(ScenarioError::UncostableTrip(trip.id))?
                .1
                .objective_eur(objective);
            let covered = match schedulable_trip_cost(instance, trip, mot) {
                TripCost::Finite(c) => c.objective_eur(objective),
                TripCost::Infinite => return Err(ScenarioError::UncostableTrip(trip.id)),
            };
            total += baseline - covered;
        }
    }
    Ok(total)
}

/// Count of trip arcs carried by each commodity, for reporting.
pub fn covered_trip_count(graph: &FlowGraph, flows: &[Vec<i64>]) -> Vec<usize> {
    let mut counts = vec![0usize; graph.commodity_count()];
    for (arc, _) in graph.trip_arcs() {
        for (k, flow) in flows.iter().enumerate() {
            if flow[arc] > 0 {
                counts[k] += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GenConfig, generate_instance};

    fn spec(model: Model, fleet: u32, objective: Objective) -> ScenarioSpec {
        ScenarioSpec {
            model,
            fleet,
            objective,
            variant_label: "none".into(),
            limits: SearchLimits::default(),
        }
    }

    fn instance() -> Instance {
        generate_instance(3, 12, &GenConfig::default()).unwrap()
    }

    #[test]
    fn no_car_policy_has_zero_car_cost_and_zero_savings() {
        let inst = instance();
        let out = run_scenario(&inst, &spec(Model::NoCar, 0, Objective::Base)).unwrap();
        assert_eq!(out.report.cost.car_type1_eur, 0.0);
        assert_eq!(out.report.cost.car_type2_eur, 0.0);
        assert!(out.report.savings_eur.abs() < 1e-9);
        assert!(out.report.cost_total_eur > 0.0);
    }

    #[test]
    fn all_car_references_cost_every_trip_by_car() {
        let inst = instance();
        let c1 = run_scenario(&inst, &spec(Model::AllCar1, 0, Objective::Base)).unwrap();
        let c2 = run_scenario(&inst, &spec(Model::AllCar2, 0, Objective::Base)).unwrap();
        assert_eq!(c1.assignment.len(), inst.trips.len());
        assert_eq!(c1.report.cost.other_mots_eur, 0.0);
        // electric reference is never pricier
        assert!(c2.report.cost_total_eur <= c1.report.cost_total_eur + 1e-9);
    }

    #[test]
    fn shared_fleet_beats_or_matches_no_car() {
        let inst = instance();
        let none = run_scenario(&inst, &spec(Model::NoCar, 0, Objective::Base)).unwrap();
        let mfc = run_scenario(&inst, &spec(Model::MfC, 4, Objective::Base)).unwrap();
        assert!(mfc.report.cost_total_eur <= none.report.cost_total_eur + 1e-9);
        assert!(mfc.report.savings_eur >= -1e-9);
    }

    #[test]
    fn odd_fleet_is_rejected() {
        let inst = instance();
        assert!(matches!(
            run_scenario(&inst, &spec(Model::MfC, 3, Objective::Base)),
            Err(ScenarioError::UnevenDepotSplit { .. })
        ));
        assert!(matches!(
            run_scenario(&inst, &spec(Model::Mmc, 6, Objective::Base)),
            Err(ScenarioError::UnevenTypeSplit { .. })
        ));
    }

    #[test]
    fn mixed_fleet_sits_between_single_fleets() {
        let inst = instance();
        let mfe = run_scenario(&inst, &spec(Model::MfE, 4, Objective::Base)).unwrap();
        let mmc = run_scenario(&inst, &spec(Model::Mmc, 4, Objective::Base)).unwrap();
        let mfc = run_scenario(&inst, &spec(Model::MfC, 4, Objective::Base)).unwrap();
        assert!(mfe.report.cost_total_eur <= mmc.report.cost_total_eur + 1e-6);
        assert!(mmc.report.cost_total_eur <= mfc.report.cost_total_eur + 1e-6);
    }

    #[test]
    fn saturated_electric_fleet_pays_most_of_the_bill_in_cars() {
        // with 20 e-cars for 20 users nearly every worthwhile trip is
        // covered, so cars carry the bulk of the total cost
        let mut shares = Vec::new();
        for seed in 1..=6u64 {
            let inst = generate_instance(seed, 20, &GenConfig::default()).unwrap();
            let out = run_scenario(&inst, &spec(Model::MfE, 20, Objective::Base)).unwrap();
            shares.push(out.report.cost.car_type2_eur / out.report.cost_total_eur);
        }
        let mean = shares.iter().sum::<f64>() / shares.len() as f64;
        assert!(
            (mean - 0.71).abs() <= 0.15,
            "mean car-cost share {mean:.3} too far from 0.71 ({shares:?})"
        );
    }

    #[test]
    fn time_objective_never_beats_base_on_recosted_total() {
        let inst = instance();
        for model in [Model::MfC, Model::MfE, Model::Mmc] {
            let base = run_scenario(&inst, &spec(model, 4, Objective::Base)).unwrap();
            let time = run_scenario(&inst, &spec(model, 4, Objective::TimeOnly)).unwrap();
            assert!(
                time.report.cost_total_eur >= base.report.cost_total_eur - 1e-6,
                "{model}: time {} < base {}",
                time.report.cost_total_eur,
                base.report.cost_total_eur
            );
        }
    }
}
