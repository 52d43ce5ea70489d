//! Pass/fail matrix comparing the Monte Carlo, finite-difference,
//! closed-form and simulation routes on one scenario.

use serde::Serialize;

use crate::dual_mc::estimate_all;
use crate::dual_pde::{solve_dual, DualField};
use crate::error::Result;
use crate::gbm::{finite_horizon_sigma0, xi_closed_form, GbmSolution};
use crate::model::Model;
use crate::primal::{PolicyTable, PrimalSolution};
use crate::scenario::Scenario;
use crate::tracker::{evaluate_strategy, Strategy};

/// One comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub group: String,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
}

impl CheckRow {
    fn new(group: &str, name: String, value: f64, reference: f64, tolerance: f64) -> Self {
        let passed = (value - reference).abs() <= tolerance;
        CheckRow { group: group.into(), name, passed, value, reference, tolerance }
    }

    fn bound(group: &str, name: String, value: f64, limit: f64) -> Self {
        CheckRow { group: group.into(), name, passed: value <= limit, value, reference: limit, tolerance: 0.0 }
    }
}

/// All comparisons run on a scenario.
#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckMatrix {
    pub scenario: String,
    pub rows: Vec<CheckRow>,
}

impl CrosscheckMatrix {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

/// Relative allowance for the finite-difference grid in the dual comparisons.
const GRID_ALLOWANCE: f64 = 1e-4;

/// Runs every comparison that applies to the scenario.
pub fn run_crosscheck(scenario: &Scenario) -> Result<CrosscheckMatrix> {
    let model = scenario.model()?;
    let field = solve_dual(&model, &scenario.solver.pde)?;
    let mut rows = Vec::new();
    dual_rows(scenario, &model, &field, &mut rows)?;
    let solution = PrimalSolution::new(&model, &field)?;
    primal_rows(scenario, &solution, &mut rows)?;
    if let Some((market, index)) = scenario.gbm() {
        let z = index.z0;
        let xi = field.xi(0.0, z)?;
        let exact = xi_closed_form(index.lambda(market)?, z, model.horizon);
        rows.push(CheckRow::new("closed-form", format!("xi(0,{z}) vs z(e^(lambda T)-1)"), xi, exact, 5e-3 * exact.abs()));
        if index.sigma_i == 0.0 && market.horizon.is_some() {
            let ys = [1.0, 0.5, 0.2];
            let cf = finite_horizon_sigma0(market, index, 0.0, z, &ys)?;
            for (y, c) in ys.iter().zip(cf) {
                let v = field.vhat_eval(0.0, z, *y)?.vhat;
                rows.push(CheckRow::new("closed-form", format!("vhat(0,{z},{y}) vs double quadrature"), v, c, 5e-3 * c.abs()));
            }
        }
        if market.horizon.is_none() {
            if let Ok(sol) = GbmSolution::new(market, index) {
                for x in [0.0, 0.5 * z, z] {
                    let v = solution.primal_value(0.0, z, x)?;
                    let c = sol.value(z, x)?;
                    rows.push(CheckRow::new("closed-form", format!("v(0,{z},{x}) vs stationary form"), v, c, 1e-2 * c.abs()));
                }
            }
        }
    }
    simulation_rows(scenario, &model, &solution, &mut rows)?;
    Ok(CrosscheckMatrix { scenario: scenario.name.clone(), rows })
}

fn dual_rows(scenario: &Scenario, model: &Model, field: &DualField, rows: &mut Vec<CheckRow>) -> Result<()> {
    for p in scenario.probes_or_default(model.horizon) {
        let est = estimate_all(model, p.t, p.z, p.u, &scenario.solver.mc)?;
        let h = field.h(p.t, p.z, p.u)?;
        let tol = (3.0 * est.h.std_error).max(0.02 * h.abs() + GRID_ALLOWANCE);
        rows.push(CheckRow::new("dual", format!("h({},{},{}) pde vs mc", p.t, p.z, p.u), h, est.h.value, tol));
        let xi = field.xi(p.t, p.z)?;
        let tol = (3.0 * est.xi.std_error).max(0.02 * xi.abs() + GRID_ALLOWANCE);
        rows.push(CheckRow::new("dual", format!("xi({},{}) pde vs mc", p.t, p.z), xi, est.xi.value, tol));
        if p.u == 0.0 {
            rows.push(CheckRow::new("neumann", format!("h_u({},{},0) mc", p.t, p.z), est.h_u.value, 0.0, 0.0));
        }
    }
    Ok(())
}

fn primal_rows(scenario: &Scenario, sol: &PrimalSolution<'_>, rows: &mut Vec<CheckRow>) -> Result<()> {
    let horizon = sol.model.horizon;
    let probes = scenario.probes_or_default(horizon);
    let mut worst_slope: f64 = 0.0;
    let mut worst_lip: f64 = 0.0;
    let mut worst_convex: f64 = 0.0;
    let mut worst_hjb: f64 = 0.0;
    for p in &probes {
        let e = 1e-6;
        let slope = (sol.primal_value(p.t, p.z, e)? - sol.primal_value(p.t, p.z, 0.0)?) / e;
        worst_slope = worst_slope.max((slope - 1.0).abs());
        let xi = sol.xi(p.t, p.z)?;
        let xs: Vec<f64> = (0..=20).map(|i| 1.2 * xi * i as f64 / 20.0).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| sol.primal_value(p.t, p.z, x)).collect::<Result<_>>()?;
        for w in 0..xs.len() - 1 {
            worst_lip = worst_lip.max((vs[w + 1] - vs[w]).abs() - (xs[w + 1] - xs[w]));
        }
        let slice = sol.field.slice(p.t, p.z)?;
        let ys: Vec<f64> = (0..=40).map(|i| 0.02 + 0.98 * i as f64 / 40.0).collect();
        let vh: Vec<f64> = ys.iter().map(|&y| slice.eval_y(y).map(|q| q.vhat)).collect::<Result<_>>()?;
        for w in 1..ys.len() - 1 {
            worst_convex = worst_convex.max(-(vh[w + 1] - 2.0 * vh[w] + vh[w - 1]));
        }
        if p.t < 0.95 * horizon && p.t > 0.0 {
            for y in [0.8, 0.5, 0.2] {
                let x = buffer_at_level(sol, p.t, p.z, y, xi)?;
                worst_hjb = worst_hjb.max(sol.hjb_residual(p.t, p.z, x)?.relative());
            }
        }
    }
    rows.push(CheckRow::bound("primal", "max |v_x(t,z,0) - 1|".into(), worst_slope, 1e-2));
    rows.push(CheckRow::bound("primal", "max Lipschitz excess".into(), worst_lip, 1e-12));
    rows.push(CheckRow::bound("primal", "max negative second difference of vhat".into(), worst_convex, 1e-8));
    rows.push(CheckRow::bound("primal", "max relative HJB residual".into(), worst_hjb, 5e-2));
    Ok(())
}

/// Buffer `x` at which `v_x(t, z, x) = y`, by bisection on `[0, xi)`.
///
/// Probing by level keeps the residual check where `v_x` is resolved even
/// when `xi` is orders of magnitude larger than the buffers of interest.
fn buffer_at_level(sol: &PrimalSolution<'_>, t: f64, z: f64, y: f64, xi: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, xi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sol.ystar(t, z, mid)? > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn simulation_rows(scenario: &Scenario, model: &Model, sol: &PrimalSolution<'_>, rows: &mut Vec<CheckRow>) -> Result<()> {
    let g = scenario.solver.policy;
    let table = PolicyTable::build(sol, g.n_t, g.n_z, g.n_r)?;
    let z = scenario.z0();
    let x0 = scenario.x0.max(0.0);
    let report = evaluate_strategy(model, Strategy::FeedbackPrimal(&table), z, x0, &scenario.solver.sim)?;
    let target = -sol.primal_value(0.0, z, x0)?;
    rows.push(CheckRow::new(
        "simulation",
        format!("feedback cost at x0 = {x0} vs -v(0,{z},{x0})"),
        report.mean,
        target,
        3.0 * report.std_error + 0.03 * target,
    ));
    rows.push(CheckRow::bound("simulation", "max cost-route gap".into(), report.max_route_gap, 1e-10 * (1.0 + target)));
    Ok(())
}
