//! Exact optimization toolkit for corporate vehicle sharing.
//!
//! User trips over a day become a savings-weighted time-space DAG; a fleet of
//! one shared vehicle type is assigned by an exact min-cost-flow solver, a
//! mixed fleet by an exact integer multi-commodity solver. A seeded generator
//! produces benchmark instances, a brute-force oracle cross-checks both
//! solvers on small cases, and the scenario/grid layer reproduces the
//! fleet-composition, preference-restriction and objective-variant analyses.

pub mod cost;
pub mod generator;
pub mod graph;
pub mod grid;
pub mod instance;
pub mod mincost;
pub mod mot;
pub mod multicommodity;
pub mod oracle;
pub mod scenario;
pub mod schedule;
pub mod validate;

pub use cost::{LegCost, Savings, TripCost};
pub use generator::{GenConfig, PrefVariant, assign_preferences, generate_instance};
pub use graph::{FlowGraph, build_multi_graph, build_single_graph};
pub use grid::{GridConfig, GridOutput, run_grid};
pub use instance::{Depot, DepotId, Instance, Task, Trip, TripId, User, UserId};
pub use mincost::{Flow, VehicleRoute, extract_routes, solve_min_cost_flow};
pub use mot::{CostConfig, Mot, MotParams, MotTable, Objective};
pub use multicommodity::{MultiFlow, SearchLimits, SolveStatus, solve_multicommodity};
pub use oracle::{OracleResult, oracle_solve};
pub use scenario::{Model, ScenarioSpec, SolutionReport, run_scenario};
