//! `ratchet`: scenario-driven front end for the dual solvers, the primal
//! recovery, the closed forms and the tracking simulator.
//!
//! Every run writes `run.json` (the resolved configuration) next to its
//! artifacts. Exit codes: 0 success, 1 validation or check failure, 2
//! numerical instability.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ratchet_core::crosscheck::run_crosscheck;
use ratchet_core::dual_mc::estimate_all;
use ratchet_core::dual_pde::{solve_dual, DualField};
use ratchet_core::gbm::{default_figure_grid, figure_sweep, solve_gamma2, GbmSolution};
use ratchet_core::primal::{PolicyTable, PrimalSolution};
use ratchet_core::report::CsvTable;
use ratchet_core::scenario::Scenario;
use ratchet_core::tracker::{evaluate_strategy, Strategy, StrategySpec};
use ratchet_core::{RatchetError, Result};

#[derive(Parser, Debug, Serialize)]
#[command(name = "ratchet", version, about = "Minimal capital injection for ratcheting benchmarks")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Seed for Monte Carlo estimators and simulations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Finite-difference nodes in u.
    #[arg(long = "grid-u", global = true)]
    grid_u: Option<usize>,
    /// Finite-difference nodes in z.
    #[arg(long = "grid-z", global = true)]
    grid_z: Option<usize>,
    /// Time step for the PDE, the dual estimators and the simulator.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, env = "RATCHET_OUT", default_value = "ratchet-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Check the structural assumptions of the scenario.
    Validate,
    /// Monte Carlo estimates of the dual function and its derivatives at the probes.
    DualMc,
    /// Solve the dual Neumann problem and save the field.
    DualPde,
    /// Tabulate v, v_x, xi and theta* at one (t, z).
    Primal {
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Factor level; defaults to the scenario's initial value.
        #[arg(long)]
        z: Option<f64>,
        #[arg(long = "n-x", default_value_t = 121)]
        n_x: usize,
    },
    /// Evaluate the scenario's strategy by simulation.
    Simulate {
        /// Initial buffer; defaults to the scenario's `x0`.
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Closed forms for an index scenario.
    ClosedForm {
        #[arg(long = "x-max", default_value_t = 5.0)]
        x_max: f64,
        #[arg(long = "n-x", default_value_t = 101)]
        n_x: usize,
    },
    /// Figure sweeps (all four when no id is given).
    Figures { ids: Vec<u8> },
    /// Monte Carlo vs finite differences vs closed forms vs simulation.
    Crosscheck,
}

/// A run that completed but whose checks did not pass.
struct Failed(serde_json::Value);

enum Outcome {
    Ok(serde_json::Value),
    Failed(Failed),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Ok(summary)) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Failed(Failed(summary))) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::from(1)
        }
        Err(e) => {
            let code = match e {
                RatchetError::Instability { .. } => 2,
                _ => 1,
            };
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| RatchetError::InvalidParameter("--scenario is required for this subcommand".into()))?;
    let mut s = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        s.solver.mc.seed = seed;
        s.solver.sim.seed = seed;
    }
    if let Some(n) = cli.paths {
        s.solver.mc.n_paths = n;
        s.solver.sim.n_paths = n;
    }
    if let Some(n) = cli.grid_u {
        s.solver.pde.n_u = n;
    }
    if let Some(n) = cli.grid_z {
        s.solver.pde.n_z = n;
    }
    if let Some(dt) = cli.dt {
        s.solver.pde.dt = Some(dt);
        s.solver.mc.dt = Some(dt);
        s.solver.sim.dt = dt;
    }
    Ok(s)
}

fn write_csv(dir: &Path, name: &str, table: &CsvTable) -> Result<PathBuf> {
    let path = dir.join(name);
    table.write(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<Outcome> {
    fs::create_dir_all(&cli.out)?;
    let scenario = match cli.command {
        Command::Figures { .. } => None,
        _ => Some(load_scenario(cli)?),
    };
    write_json(&cli.out, "run.json", &json!({ "command": &cli.command, "flags": cli, "scenario": &scenario }))?;
    let out = cli.out.as_path();
    match (&cli.command, scenario) {
        (Command::Figures { ids }, _) => figures(out, ids),
        (Command::Validate, Some(s)) => validate(out, &s),
        (Command::DualMc, Some(s)) => dual_mc(out, &s),
        (Command::DualPde, Some(s)) => dual_pde(out, &s),
        (Command::Primal { t, z, n_x }, Some(s)) => primal(out, &s, *t, *z, *n_x),
        (Command::Simulate { x0 }, Some(s)) => simulate(out, &s, *x0),
        (Command::ClosedForm { x_max, n_x }, Some(s)) => closed_form(out, &s, *x_max, *n_x),
        (Command::Crosscheck, Some(s)) => crosscheck(out, &s),
        (_, None) => unreachable!("scenario loaded for every other subcommand"),
    }
}

fn validate(out: &Path, s: &Scenario) -> Result<Outcome> {
    let report = s.assumptions()?;
    let model_error = s.model().err().map(|e| json!({ "error": e.kind(), "message": e.to_string() }));
    let summary = json!({ "passed": report.passed() && model_error.is_none(), "assumptions": report, "model_error": model_error });
    write_json(out, "validate.json", &summary)?;
    if report.passed() && model_error.is_none() {
        Ok(Outcome::Ok(summary))
    } else {
        Ok(Outcome::Failed(Failed(summary)))
    }
}

fn dual_mc(out: &Path, s: &Scenario) -> Result<Outcome> {
    let model = s.model()?;
    let mut table = CsvTable::new([
        "t", "z", "u", "h", "h_se", "h_u", "h_u_se", "h_uu", "h_uu_se", "h_z", "h_z_se", "h_zu", "h_zu_se", "h_t", "h_t_se",
        "xi", "xi_se",
    ]);
    for p in s.probes_or_default(model.horizon) {
        let e = estimate_all(&model, p.t, p.z, p.u, &s.solver.mc)?;
        let (uu, uu_se) = e.h_uu.map(|q| (q.value, q.std_error)).unwrap_or((f64::NAN, f64::NAN));
        table.push(vec![
            p.t, p.z, p.u, e.h.value, e.h.std_error, e.h_u.value, e.h_u.std_error, uu, uu_se, e.h_z.value,
            e.h_z.std_error, e.h_zu.value, e.h_zu.std_error, e.h_t.value, e.h_t.std_error, e.xi.value, e.xi.std_error,
        ]);
    }
    let path = write_csv(out, "dual_mc.csv", &table)?;
    Ok(Outcome::Ok(json!({ "probes": table.rows.len(), "csv": path })))
}

fn solve(s: &Scenario) -> Result<(ratchet_core::model::Model, DualField)> {
    let model = s.model()?;
    let field = solve_dual(&model, &s.solver.pde)?;
    Ok((model, field))
}

fn dual_pde(out: &Path, s: &Scenario) -> Result<Outcome> {
    let (_, field) = solve(s)?;
    let bin = out.join("field.bin");
    field.save(BufWriter::new(File::create(&bin)?))?;
    let mut table = CsvTable::new(["t", "z", "xi", "h_u0"]);
    for &t in &field.t {
        for &z in &field.z {
            table.push(vec![t, z, field.xi(t, z)?, field.h(t, z, 0.0)?]);
        }
    }
    let csv = write_csv(out, "xi.csv", &table)?;
    let summary = json!({ "meta": field.meta, "neumann_defect": field.neumann_defect(), "field": bin, "csv": csv });
    write_json(out, "dual_pde.json", &summary)?;
    Ok(Outcome::Ok(summary))
}

fn primal(out: &Path, s: &Scenario, t: f64, z: Option<f64>, n_x: usize) -> Result<Outcome> {
    let (model, field) = solve(s)?;
    let sol = PrimalSolution::new(&model, &field)?;
    let z = z.unwrap_or_else(|| s.z0());
    let xi = sol.xi(t, z)?;
    let n = n_x.max(2);
    let xs: Vec<f64> = (0..n).map(|i| 1.2 * xi * i as f64 / (n - 1) as f64).collect();
    let table = sol.tabulate(t, z, &xs)?;
    let csv = write_csv(out, "primal.csv", &table)?;
    let summary = json!({ "t": t, "z": z, "xi": xi, "csv": csv });
    Ok(Outcome::Ok(summary))
}

fn simulate(out: &Path, s: &Scenario, x0: Option<f64>) -> Result<Outcome> {
    let model = s.model()?;
    let x0 = x0.unwrap_or(s.x0);
    let z0 = s.z0();
    let report = match &s.strategy {
        StrategySpec::FeedbackPrimal => {
            let field = solve_dual(&model, &s.solver.pde)?;
            let sol = PrimalSolution::new(&model, &field)?;
            let g = s.solver.policy;
            let table = PolicyTable::build(&sol, g.n_t, g.n_z, g.n_r)?;
            let r = evaluate_strategy(&model, Strategy::FeedbackPrimal(&table), z0, x0, &s.solver.sim)?;
            let value = sol.primal_value(0.0, z0, x0.max(0.0))?;
            json!({ "report": r, "value": value })
        }
        StrategySpec::ClosedFormGbm { printed } => {
            let (market, index) =
                s.gbm().ok_or_else(|| RatchetError::InvalidParameter("closed-form strategy needs an index scenario".into()))?;
            let sol = GbmSolution::new(market, index)?;
            let r = evaluate_strategy(&model, Strategy::ClosedFormGbm { solution: &sol, printed: *printed }, z0, x0, &s.solver.sim)?;
            let value = sol.value(z0, x0.max(0.0))?;
            json!({ "report": r, "value": value })
        }
        StrategySpec::Constant { theta } => {
            json!({ "report": evaluate_strategy(&model, Strategy::Constant(theta), z0, x0, &s.solver.sim)? })
        }
        StrategySpec::Zero => json!({ "report": evaluate_strategy(&model, Strategy::Zero, z0, x0, &s.solver.sim)? }),
    };
    let summary = json!({ "strategy": s.strategy, "z0": z0, "x0": x0, "result": report });
    write_json(out, "simulate.json", &summary)?;
    Ok(Outcome::Ok(summary))
}

fn closed_form(out: &Path, s: &Scenario, x_max: f64, n_x: usize) -> Result<Outcome> {
    let (market, index) =
        s.gbm().ok_or_else(|| RatchetError::InvalidParameter("closed-form needs an index scenario".into()))?;
    let sol = GbmSolution::new(market, index)?;
    let roots = if sol.trivial { None } else { Some(solve_gamma2(market, index)?) };
    let z = index.z0;
    let d = market.d();
    let mut header = vec!["x".to_string(), "v".into(), "v_x".into()];
    header.extend((1..=d).map(|i| format!("theta_bar_{i}")));
    header.extend((1..=d).map(|i| format!("theta_{i}")));
    header.push("hjb_residual".into());
    let mut table = CsvTable::new(header);
    let n = n_x.max(2);
    for i in 0..n {
        let x = x_max * i as f64 / (n - 1) as f64;
        let mut row = vec![x, sol.value(z, x)?, sol.v_x(z, x)?];
        let tb = sol.theta_bar(z, x)?;
        row.extend(tb.iter());
        row.extend(sol.to_tradable(z, &tb).iter());
        row.push(sol.stationary_hjb_residual(market, z, x)?);
        table.push(row);
    }
    let csv = write_csv(out, "closed_form.csv", &table)?;
    let summary = json!({ "solution": sol, "roots": roots, "z": z, "csv": csv });
    write_json(out, "closed_form.json", &summary)?;
    Ok(Outcome::Ok(summary))
}

fn figures(out: &Path, ids: &[u8]) -> Result<Outcome> {
    let ids: Vec<u8> = if ids.is_empty() { vec![1, 2, 3, 4] } else { ids.to_vec() };
    let grid = default_figure_grid();
    let mut sweeps = Vec::new();
    let mut all = true;
    for id in ids {
        let sweep = figure_sweep(id, &grid)?;
        let csv = write_csv(out, &format!("figure_{id}.csv"), &sweep.table)?;
        all &= sweep.passed();
        sweeps.push(json!({ "figure": id, "parameter": sweep.parameter, "trends": sweep.trends, "csv": csv }));
    }
    let summary = json!({ "passed": all, "figures": sweeps });
    write_json(out, "figures.json", &summary)?;
    Ok(Outcome::Ok(summary))
}

fn crosscheck(out: &Path, s: &Scenario) -> Result<Outcome> {
    let matrix = run_crosscheck(s)?;
    let summary = json!({ "passed": matrix.passed(), "matrix": matrix });
    write_json(out, "crosscheck.json", &summary)?;
    if matrix.passed() {
        Ok(Outcome::Ok(summary))
    } else {
        Ok(Outcome::Failed(Failed(summary)))
    }
}
