//! Experiment grid: run every (model, users, fleet, variant, objective, seed)
//! cell, collect one report row per cell, and render the CSV and plot-data
//! outputs. Cells are independent and run in parallel; assembly is sorted by
//! cell key so the output bytes never depend on scheduling.
//!
//! Timings go to their own file: wall-clock jitter must not leak into the
//! result rows, which are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generator::{GenConfig, PrefVariant, assign_preferences, generate_instance};
use crate::mot::Objective;
use crate::multicommodity::{SearchLimits, SolveStatus};
use crate::scenario::{Model, ScenarioSpec, SolutionReport, run_scenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub users: Vec<u32>,
    pub fleets: Vec<u32>,
    pub models: Vec<Model>,
    pub variants: Vec<PrefVariant>,
    pub objectives: Vec<Objective>,
    pub seeds: Vec<u64>,
    pub generator: GenConfig,
    pub solver_node_limit: u64,
    pub solver_time_budget_s: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            users: vec![20, 50, 100, 150, 200, 250, 300],
            fleets: vec![4, 8, 20, 40],
            models: Model::ALL.to_vec(),
            variants: vec![PrefVariant::None],
            objectives: vec![Objective::Base],
            seeds: (1..=10).collect(),
            generator: GenConfig::default(),
            solver_node_limit: 1_000_000,
            solver_time_budget_s: 120.0,
        }
    }
}

impl GridConfig {
    fn limits(&self) -> SearchLimits {
        SearchLimits {
            max_nodes: self.solver_node_limit,
            time_budget: std::time::Duration::from_secs_f64(self.solver_time_budget_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub model: &'static str,
    pub users: u32,
    pub fleet: u32,
    pub variant: &'static str,
    pub objective: String,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub key: CellKey,
    pub report: Option<SolutionReport>,
    pub error: Option<String>,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub rows: Vec<GridRow>,
}

pub const RESULTS_HEADER: &str = "model,users,fleet,variant,objective,seed,\
cost_car_type1,cost_car_type2,cost_other_mots,cost_total,savings,objective_eur,\
trips_per_car_type1,trips_per_car_type2,status,bound_gap_eur,error";

pub fn run_grid(cfg: &GridConfig) -> GridOutput {
    let mut cells: Vec<(Model, u32, u32, PrefVariant, Objective, u64)> = Vec::new();
    for &model in &cfg.models {
        for &users in &cfg.users {
            for &fleet in &cfg.fleets {
                for &variant in &cfg.variants {
                    for &objective in &cfg.objectives {
                        for &seed in &cfg.seeds {
                            cells.push((model, users, fleet, variant, objective, seed));
                        }
                    }
                }
            }
        }
    }

    let mut rows: Vec<GridRow> = cells
        .into_par_iter()
        .map(|(model, users, fleet, variant, objective, seed)| {
            run_cell(cfg, model, users, fleet, variant, objective, seed)
        })
        .collect();
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    GridOutput { rows }
}

fn run_cell(
    cfg: &GridConfig,
    model: Model,
    users: u32,
    fleet: u32,
    variant: PrefVariant,
    objective: Objective,
    seed: u64,
) -> GridRow {
    let key = CellKey {
        model: model.as_str(),
        users,
        fleet,
        variant: variant.as_str(),
        objective: objective.to_string(),
        seed,
    };
    let instance = match generate_instance(seed, users, &cfg.generator) {
        Ok(inst) => assign_preferences(&inst, variant, seed),
        Err(e) => {
            return GridRow { key, report: None, error: Some(e.to_string()), solve_time_s: 0.0 };
        }
    };
    let spec = ScenarioSpec {
        model,
        fleet,
        objective,
        variant_label: variant.as_str().to_owned(),
        limits: cfg.limits(),
    };
    match run_scenario(&instance, &spec) {
        Ok(outcome) => {
            let solve_time_s = outcome.report.solve_time_s;
            GridRow { key, report: Some(outcome.report), error: None, solve_time_s }
        }
        Err(e) => GridRow { key, report: None, error: Some(e.to_string()), solve_time_s: 0.0 },
    }
}

fn fmt_eur(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_trips(v: Option<f64>) -> String {
    v.map(|t| format!("{t:.1}")).unwrap_or_default()
}

fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::TimedOut => "timed_out",
    }
}

pub fn results_row(row: &GridRow) -> String {
    let k = &row.key;
    match &row.report {
        Some(r) => format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            k.model,
            k.users,
            k.fleet,
            k.variant,
            k.objective,
            k.seed,
            fmt_eur(r.cost.car_type1_eur),
            fmt_eur(r.cost.car_type2_eur),
            fmt_eur(r.cost.other_mots_eur),
            fmt_eur(r.cost_total_eur),
            fmt_eur(r.savings_eur),
            fmt_eur(r.objective_eur),
            fmt_trips(r.trips_per_car_type1),
            fmt_trips(r.trips_per_car_type2),
            status_str(r.status),
            fmt_eur(r.bound_gap_eur),
            "",
        ),
        None => format!(
            "{},{},{},{},{},{},,,,,,,,,,,{}",
            k.model,
            k.users,
            k.fleet,
            k.variant,
            k.objective,
            k.seed,
            row.error.as_deref().unwrap_or("unknown error"),
        ),
    }
}

impl GridOutput {
    pub fn results_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&results_row(row));
            out.push('\n');
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("model,users,fleet,variant,objective,seed,solve_time_s\n");
        for row in &self.rows {
            let k = &row.key;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                k.model, k.users, k.fleet, k.variant, k.objective, k.seed, row.solve_time_s
            );
        }
        out
    }

    /// Per-cell means over seeds, shaped like the summary tables.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(
            "model,users,fleet,variant,objective,n,cost_car_type1,cost_car_type2,\
cost_other_mots,cost_total,savings,trips_per_car_type1,trips_per_car_type2\n",
        );
        for (key, group) in self.grouped() {
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&SolutionReport) -> f64| {
                group.iter().map(|r| f(r)).sum::<f64>() / n
            };
            let mean_opt = |f: &dyn Fn(&SolutionReport) -> Option<f64>| {
                let vals: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                key.0,
                key.1,
                key.2,
                key.3,
                key.4,
                group.len(),
                fmt_eur(mean(&|r| r.cost.car_type1_eur)),
                fmt_eur(mean(&|r| r.cost.car_type2_eur)),
                fmt_eur(mean(&|r| r.cost.other_mots_eur)),
                fmt_eur(mean(&|r| r.cost_total_eur)),
                fmt_eur(mean(&|r| r.savings_eur)),
                fmt_trips(mean_opt(&|r| r.trips_per_car_type1)),
                fmt_trips(mean_opt(&|r| r.trips_per_car_type2)),
            );
        }
        out
    }

    /// Mean total cost against fleet size, one series per (users, model,
    /// variant, objective): the cost-comparison chart data.
    pub fn plot_cost_vs_fleet_csv(&self) -> String {
        let mut out = String::from("users,model,variant,objective,fleet,mean_total_eur\n");
        for (key, group) in self.grouped() {
            let mean = group.iter().map(|r| r.cost_total_eur).sum::<f64>() / group.len() as f64;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                key.1,
                key.0,
                key.3,
                key.4,
                key.2,
                fmt_eur(mean)
            );
        }
        out
    }

    /// Cost-composition bars: car cost, other-MOT cost, and savings drawn
    /// downwards (negated), per cell.
    pub fn plot_cost_breakdown_csv(&self) -> String {
        let mut out =
            String::from("users,fleet,model,variant,objective,cars_eur,other_mots_eur,savings_negated_eur\n");
        for (key, group) in self.grouped() {
            let n = group.len() as f64;
            let cars = group
                .iter()
                .map(|r| r.cost.car_type1_eur + r.cost.car_type2_eur)
                .sum::<f64>()
                / n;
            let other = group.iter().map(|r| r.cost.other_mots_eur).sum::<f64>() / n;
            let savings = group.iter().map(|r| r.savings_eur).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                key.1,
                key.2,
                key.0,
                key.3,
                key.4,
                fmt_eur(cars),
                fmt_eur(other),
                fmt_eur(-savings)
            );
        }
        out
    }

    fn grouped(&self) -> BTreeMap<(String, u32, u32, String, String), Vec<&SolutionReport>> {
        let mut groups: BTreeMap<(String, u32, u32, String, String), Vec<&SolutionReport>> =
            BTreeMap::new();
        for row in &self.rows {
            if let Some(r) = &row.report {
                groups
                    .entry((
                        row.key.model.to_owned(),
                        row.key.users,
                        row.key.fleet,
                        row.key.variant.to_owned(),
                        row.key.objective.clone(),
                    ))
                    .or_default()
                    .push(r);
            }
        }
        groups
    }

    pub fn error_rows(&self) -> impl Iterator<Item = &GridRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn reports(&self) -> impl Iterator<Item = (&CellKey, &SolutionReport)> {
        self.rows.iter().filter_map(|r| r.report.as_ref().map(|rep| (&r.key, rep)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GridConfig {
        GridConfig {
            users: vec![6],
            fleets: vec![2],
            models: vec![Model::MfC, Model::NoCar],
            variants: vec![PrefVariant::None],
            objectives: vec![Objective::Base],
            seeds: vec![1, 2],
            ..GridConfig::default()
        }
    }

    #[test]
    fn empty_model_list_yields_header_only_csv() {
        let cfg = GridConfig { models: vec![], ..small_config() };
        let out = run_grid(&cfg);
        assert_eq!(out.results_csv(), format!("{RESULTS_HEADER}\n"));
    }

    #[test]
    fn rows_are_sorted_and_complete() {
        let out = run_grid(&small_config());
        assert_eq!(out.rows.len(), 4);
        let mut keys: Vec<_> = out.rows.iter().map(|r| r.key.clone()).collect();
        let sorted = {
            let mut s = keys.clone();
            s.sort();
            s
        };
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), 4);
        assert_eq!(out.error_rows().count(), 0);
    }

    #[test]
    fn rerunning_a_cell_reproduces_bytes() {
        let cfg = small_config();
        let a = run_grid(&cfg).results_csv();
        let b = run_grid(&cfg).results_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_cells_keep_the_grid_partial_with_error_column() {
        // odd fleet cannot split over two depots
        let cfg = GridConfig { fleets: vec![3], ..small_config() };
        let out = run_grid(&cfg);
        // NO-CAR ignores the fleet and still succeeds; MF-C rows error out
        let errors: Vec<_> = out.error_rows().collect();
        assert_eq!(errors.len(), 2);
        assert!(errors.iter().all(|r| r.key.model == "MF-C"));
        let csv = out.results_csv();
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.contains("does not split evenly"));
    }
}
