//! Command-line front end: generate instances, solve single scenarios, run
//! experiment grids, and cross-check the solvers against the brute-force
//! oracle.
//!
//! Exit codes: 0 on success, 2 when a solve hit its budget and returned a
//! bounded-gap incumbent, 1 on any error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};

use fleetshare::generator::PrefVariant;
use fleetshare::grid::{GridConfig, run_grid};
use fleetshare::mincost::solve_min_cost_flow;
use fleetshare::multicommodity::{SearchLimits, SolveStatus, solve_multicommodity_with};
use fleetshare::oracle::{MAX_ORACLE_VEHICLES, oracle_solve};
use fleetshare::scenario::{Model, ScenarioSpec, run_scenario};
use fleetshare::{
    DepotId, GenConfig, Instance, Mot, Objective, build_multi_graph, build_single_graph,
    generate_instance,
};

#[derive(Parser)]
#[command(name = "fleetshare", version, about = "Vehicle-sharing fleet assignment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance and write it as JSON.
    Gen(GenArgs),
    /// Solve one scenario on an instance file and append a report row.
    Solve(SolveArgs),
    /// Run an experiment grid and write CSV and plot data files.
    Grid(GridArgs),
    /// Compare both solvers against the exhaustive oracle on small instances.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    users: u32,
    #[arg(long)]
    seed: u64,
    /// Preference variant (none, prefVar0..prefVar6).
    #[arg(long, default_value = "none")]
    pref: PrefVariant,
    /// Generator configuration JSON; defaults are built in.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mode-of-transport parameter table JSON (array of rows); the standard
    /// table when omitted.
    #[arg(long)]
    mot_table: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    model: Model,
    #[arg(long, default_value_t = 0)]
    fleet: u32,
    #[arg(long, default_value = "base")]
    objective: Objective,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Write the built flow graph in the line-oriented debug format.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    #[arg(long, default_value_t = 120.0)]
    time_budget_s: f64,
    #[arg(long, default_value_t = 1_000_000)]
    node_limit: u64,
}

#[derive(Args)]
struct GridArgs {
    /// Grid configuration JSON; the full default grid when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Upper bound on trips per checked instance.
    #[arg(long, default_value_t = 10)]
    max_trips: usize,
    /// Number of seeded instances per solver.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Grid(args) => cmd_grid(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let config: GenConfig = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => GenConfig::default(),
    };
    let mut instance = generate_instance(args.seed, args.users, &config)?;
    if let Some(path) = &args.mot_table {
        instance.mot_table = fleetshare::MotTable::from_json(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
    }
    let instance = fleetshare::assign_preferences(&instance, args.pref, args.seed);
    fs::write(&args.out, instance.to_canonical_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "wrote {} ({} users, {} trips, variant {})",
        args.out.display(),
        instance.users.len(),
        instance.trips.len(),
        args.pref
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let instance = Instance::from_json(&read(&args.instance)?)
        .with_context(|| format!("parsing {}", args.instance.display()))?;
    if args.model.is_solved() && args.fleet == 0 {
        bail!("--fleet is required for {}", args.model);
    }
    if let Some(path) = &args.dump_graph {
        dump_graph(&instance, &args, path)?;
    }
    let spec = ScenarioSpec {
        model: args.model,
        fleet: args.fleet,
        objective: args.objective,
        variant_label: "file".into(),
        limits: SearchLimits {
            max_nodes: args.node_limit,
            time_budget: Duration::from_secs_f64(args.time_budget_s),
        },
    };
    let outcome = run_scenario(&instance, &spec)?;
    let report = &outcome.report;

    let mut csv = String::from(fleetshare::grid::RESULTS_HEADER);
    csv.push('\n');
    csv.push_str(&fleetshare::grid::results_row(&fleetshare::grid::GridRow {
        key: fleetshare::grid::CellKey {
            model: report.model.as_str(),
            users: report.users,
            fleet: report.fleet,
            variant: "file",
            objective: report.objective.to_string(),
            seed: report.seed,
        },
        report: Some(report.clone()),
        error: None,
        solve_time_s: report.solve_time_s,
    }));
    csv.push('\n');
    match &args.out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    eprintln!(
        "{} fleet {} objective {}: total {:.3} eur, savings {:.3} eur, {:.3}s",
        report.model, report.fleet, report.objective, report.cost_total_eur, report.savings_eur,
        report.solve_time_s
    );
    if report.status == SolveStatus::TimedOut {
        eprintln!(
            "solver hit its budget; incumbent gap {:.3} eur",
            report.bound_gap_eur
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn dump_graph(instance: &Instance, args: &SolveArgs, path: &Path) -> Result<()> {
    let per_depot = args.fleet / instance.depots.len().max(1) as u32;
    let graph = match args.model {
        Model::MfC | Model::MfE => {
            let shared = if args.model == Model::MfC { Mot::CarType1 } else { Mot::CarType2 };
            let fleet: BTreeMap<DepotId, u32> =
                instance.depots.iter().map(|d| (d.id, per_depot)).collect();
            build_single_graph(instance, shared, &fleet)?
        }
        Model::Mmc => {
            let per_cell = args.fleet / (2 * instance.depots.len().max(1) as u32);
            let mut fleet = BTreeMap::new();
            for mot in [Mot::CarType1, Mot::CarType2] {
                for d in &instance.depots {
                    fleet.insert((mot, d.id), per_cell);
                }
            }
            build_multi_graph(instance, &[Mot::CarType1, Mot::CarType2], &fleet)?
        }
        _ => bail!("--dump-graph only applies to the solved models"),
    };
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    graph.write_dump(&mut file)?;
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<ExitCode> {
    let config: GridConfig = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => GridConfig::default(),
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let output = run_grid(&config);
    let dir = &args.out;
    fs::write(dir.join("results.csv"), output.results_csv())?;
    fs::write(dir.join("timings.csv"), output.timings_csv())?;
    fs::write(dir.join("aggregate.csv"), output.aggregate_csv())?;
    fs::write(dir.join("plot_cost_vs_fleet.csv"), output.plot_cost_vs_fleet_csv())?;
    fs::write(dir.join("plot_cost_breakdown.csv"), output.plot_cost_breakdown_csv())?;
    let errors = output.error_rows().count();
    let timeouts = output
        .reports()
        .filter(|(_, r)| r.status == SolveStatus::TimedOut)
        .count();
    eprintln!(
        "{} rows ({} errors, {} timeouts) -> {}",
        output.rows.len(),
        errors,
        timeouts,
        dir.display()
    );
    if errors > 0 {
        return Ok(ExitCode::from(1));
    }
    if timeouts > 0 {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: OracleArgs) -> Result<ExitCode> {
    let mut mismatches = 0u64;
    let mut checked = 0u64;
    let mut seed = 0u64;
    while checked < args.seeds {
        seed += 1;
        let users = 2 + seed % 2;
        let instance = generate_instance(seed, users as u32, &GenConfig::default())?;
        if instance.trips.len() > args.max_trips {
            continue;
        }
        checked += 1;

        // single type: one or two vehicles at depot 0
        let vehicles = 1 + (seed % 2) as u32;
        let fleet: BTreeMap<DepotId, u32> = [(DepotId(0), vehicles)].into_iter().collect();
        let graph = build_single_graph(&instance, Mot::CarType1, &fleet)?;
        let flow = solve_min_cost_flow(&graph);
        let oracle = oracle_solve(&graph).context("oracle guard exceeded")?;
        let single_ok = flow.objective_micro == oracle.objective_micro;

        // both car types with one vehicle each
        let mut mfleet = BTreeMap::new();
        mfleet.insert((Mot::CarType1, DepotId(0)), 1u32);
        mfleet.insert((Mot::CarType2, DepotId(1)), 1u32);
        let mgraph = build_multi_graph(&instance, &[Mot::CarType1, Mot::CarType2], &mfleet)?;
        let msol = solve_multicommodity_with(&mgraph, &SearchLimits::default(), None);
        let moracle = oracle_solve(&mgraph).context("oracle guard exceeded")?;
        let multi_ok =
            msol.objective_micro == moracle.objective_micro && msol.bound_gap_micro == 0;

        if !single_ok || !multi_ok {
            mismatches += 1;
            eprintln!(
                "seed {seed}: single {} vs {}, multi {} vs {}",
                flow.objective_micro,
                oracle.objective_micro,
                msol.objective_micro,
                moracle.objective_micro
            );
        }
    }
    println!(
        "oracle-check: {checked} instances, {mismatches} mismatches (max {} vehicles per side)",
        MAX_ORACLE_VEHICLES
    );
    if mismatches > 0 {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
