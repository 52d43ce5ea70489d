//! Simulation of the original tracking problem.
//!
//! Wealth follows `dV = theta' (mu dt + sigma dW)`, the benchmark grows by
//! `dA = f(t, Z) dt` and the minimal injection is the running maximum
//! `C*_t = 0 v sup_{s <= t} (A_s - V_s)`. The buffer `X = V + C* - A` is the
//! reflected state on which feedback strategies act; injections never feed
//! back into the wealth.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::gbm::GbmSolution;
use crate::model::Model;
use crate::paths::{factor_step, RngSpec, TimeGrid};
use crate::primal::{PolicyTable, PrimalSolution};

/// Running-max envelope `C*_k = max(0, max_{j <= k} (A_j - V_j))`.
pub fn minimal_injection(benchmark: &[f64], wealth: &[f64]) -> Result<Vec<f64>> {
    if benchmark.len() != wealth.len() {
        return Err(RatchetError::GridMismatch(format!(
            "benchmark has {} nodes, wealth has {}",
            benchmark.len(),
            wealth.len()
        )));
    }
    let mut c = 0.0_f64;
    Ok(benchmark
        .iter()
        .zip(wealth)
        .map(|(a, v)| {
            c = c.max(a - v);
            c
        })
        .collect())
}

/// Discounted injection cost in its two equivalent forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InjectionCost {
    /// `C_0 + sum e^{-rho t_k} (C_k - C_{k-1})`.
    pub stieltjes: f64,
    /// `e^{-rho T} C_T + rho int_0^T e^{-rho t} C_t dt` for the piecewise-constant path.
    pub by_parts: f64,
}

/// Both forms of `C_0 + int e^{-rho t} dC_t` on the nodes `times`.
pub fn injection_cost(times: &[f64], c: &[f64], rho: f64) -> Result<InjectionCost> {
    if times.len() != c.len() || c.is_empty() {
        return Err(RatchetError::GridMismatch(format!("{} times for {} injection values", times.len(), c.len())));
    }
    let disc: Vec<f64> = times.iter().map(|t| (-rho * t).exp()).collect();
    discounted_cost(&disc, c)
}

fn discounted_cost(disc: &[f64], c: &[f64]) -> Result<InjectionCost> {
    if let Some(k) = (1..c.len()).find(|&k| c[k] < c[k - 1]) {
        return Err(RatchetError::InvalidParameter(format!("injection path decreases at node {k}")));
    }
    let last = c.len() - 1;
    let mut stieltjes = c[0] * disc[0];
    let mut by_parts = c[last] * disc[last];
    for k in 1..c.len() {
        stieltjes += disc[k] * (c[k] - c[k - 1]);
        by_parts += c[k - 1] * (disc[k - 1] - disc[k]);
    }
    Ok(InjectionCost { stieltjes, by_parts })
}

/// Serializable strategy choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategySpec {
    /// Feedback portfolio recovered from the dual field.
    FeedbackPrimal,
    /// Closed-form geometric-index portfolio; `printed` selects the published formula.
    ClosedFormGbm {
        #[serde(default)]
        printed: bool,
    },
    Constant { theta: Vec<f64> },
    Zero,
}

/// A strategy bound to the objects it evaluates.
#[derive(Clone, Copy)]
pub enum Strategy<'a> {
    FeedbackPrimal(&'a PolicyTable),
    ClosedFormGbm { solution: &'a GbmSolution, printed: bool },
    Constant(&'a [f64]),
    Zero,
}

/// Buffer below which the printed closed form is evaluated at `x_eps = 1e-4 z`.
const CLAMP_FRACTION: f64 = 1e-4;

impl<'a> Strategy<'a> {
    /// Writes `theta(t, z, x)` into `out`; returns true when the evaluation was clamped.
    fn eval(&self, t: f64, z: f64, x: f64, out: &mut [f64]) -> bool {
        match self {
            Strategy::FeedbackPrimal(table) => {
                table.theta_into(t, z, x, out);
                false
            }
            Strategy::ClosedFormGbm { solution, printed } => {
                let zz = z.max(1e-12);
                let xx = x.max(0.0);
                if !*printed {
                    solution.theta_bar_into(zz, xx, out);
                    return false;
                }
                let (th, clamped) = match solution.theta_bar_printed(zz, xx) {
                    Ok(th) => (th, false),
                    Err(_) => (
                        solution
                            .theta_bar_printed(zz, xx.max(CLAMP_FRACTION * zz))
                            .unwrap_or_else(|_| DVector::zeros(out.len())),
                        true,
                    ),
                };
                out.copy_from_slice(th.as_slice());
                clamped
            }
            Strategy::Constant(theta) => {
                out.copy_from_slice(theta);
                false
            }
            Strategy::Zero => {
                out.iter_mut().for_each(|v| *v = 0.0);
                false
            }
        }
    }
}

/// Simulation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_paths: 10_000, dt: 1e-3, seed: 1 }
    }
}

impl SimConfig {
    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Monte Carlo summary of a strategy's discounted injection cost.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Paths with a positive total injection.
    pub injection_fraction: f64,
    /// Mean number of steps with a positive injection.
    pub mean_injection_steps: f64,
    /// Largest per-path gap between the running-max and the reflected-buffer cost routes.
    pub max_route_gap: f64,
    /// Largest violation of `A <= V + C*` over all nodes and paths.
    pub max_floor_violation: f64,
    pub clamp_count: u64,
}

struct PathOutcome {
    cost: f64,
    route_gap: f64,
    floor_violation: f64,
    injection_steps: u32,
    clamps: u64,
}

/// Per-run constants shared by all paths.
struct Setup<'m> {
    model: &'m Model,
    grid: TimeGrid,
    disc: Vec<f64>,
    mu: Vec<f64>,
    /// Row-major volatility matrix.
    sigma: Vec<f64>,
}

fn simulate_path(setup: &Setup<'_>, strategy: Strategy<'_>, z0: f64, x0: f64, stream: RngSpec) -> Result<PathOutcome> {
    let model = setup.model;
    let d = model.d();
    let mut rng = stream.rng();
    let gamma = &model.factor.gamma;
    let dt = setup.grid.dt();
    let sq = dt.sqrt();
    let n = setup.grid.n_steps;

    let mut theta = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut z = z0;
    // Free buffer F = V - A and the reflected buffer X = F + L.
    let mut free = x0;
    let mut local = (-x0).max(0.0);
    let mut x = free + local;
    let mut gaps = Vec::with_capacity(n + 1);
    gaps.push(-free);
    let mut reflected_cost = local;
    let mut injection_steps = 0;
    let mut clamps = 0;
    let mut min_x = x;
    for k in 0..n {
        let t = setup.grid.time(k);
        if strategy.eval(t, z, x, &mut theta) {
            clamps += 1;
        }
        for w in dw.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *w = sq * e;
        }
        let mut gain = 0.0;
        for i in 0..d {
            let row = &setup.sigma[i * d..(i + 1) * d];
            let noise: f64 = row.iter().zip(&dw).map(|(s, w)| s * w).sum();
            gain += theta[i] * (setup.mu[i] * dt + noise);
        }
        let bench = model.f(t, z) * dt;
        let dw_gamma: f64 = gamma.iter().zip(&dw).map(|(g, w)| g * w).sum();
        z = factor_step(model.dynamics(), z, dt, dw_gamma);
        free += gain - bench;
        gaps.push(-free);
        // Discrete Skorokhod map: L_{k+1} = max(L_k, -F_{k+1}).
        let next_local = local.max(-free);
        let push = next_local - local;
        x = free + next_local;
        if push > 0.0 {
            local = next_local;
            reflected_cost += setup.disc[k + 1] * push;
            injection_steps += 1;
        }
        min_x = min_x.min(x);
    }
    let mut c = 0.0_f64;
    for g in gaps.iter_mut() {
        c = c.max(*g);
        *g = c;
    }
    let envelope = gaps;
    let cost = discounted_cost(&setup.disc, &envelope)?;
    let route_gap = (cost.stieltjes - reflected_cost)
        .abs()
        .max((cost.stieltjes - cost.by_parts).abs())
        .max((envelope[n] - local).abs());
    let floor_violation = (-min_x).max(0.0);
    Ok(PathOutcome { cost: cost.stieltjes, route_gap, floor_violation, injection_steps, clamps })
}

/// Monte Carlo cost of `strategy` started at `(0, z0)` with buffer `x0`
/// (`x0 < 0` means an initial injection of `-x0`). Path `i` uses stream `i`.
pub fn evaluate_strategy(model: &Model, strategy: Strategy<'_>, z0: f64, x0: f64, cfg: &SimConfig) -> Result<CostReport> {
    if cfg.n_paths < 2 {
        return Err(RatchetError::InvalidParameter("need at least two paths".into()));
    }
    if let Strategy::Constant(th) = strategy {
        if th.len() != model.d() {
            return Err(RatchetError::InvalidParameter(format!("constant portfolio has {} entries, need {}", th.len(), model.d())));
        }
    }
    let grid = TimeGrid::covering(0.0, model.horizon, cfg.dt)?;
    let sigma = model.market.sigma_matrix();
    let d = model.d();
    let setup = Setup {
        model,
        grid,
        disc: grid.times().iter().map(|t| (-model.rho() * t).exp()).collect(),
        mu: model.market.mu.clone(),
        sigma: (0..d * d).map(|k| sigma[(k / d, k % d)]).collect(),
    };
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| simulate_path(&setup, strategy, z0, x0, RngSpec::new(cfg.seed, i as u64)))
        .collect::<Result<_>>()?;
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = outcomes.iter().map(|o| (o.cost - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CostReport {
        mean,
        std_error: (var / n).sqrt(),
        n_paths: outcomes.len(),
        horizon: model.horizon,
        dt: grid.dt(),
        injection_fraction: outcomes.iter().filter(|o| o.cost > 0.0).count() as f64 / n,
        mean_injection_steps: outcomes.iter().map(|o| o.injection_steps as f64).sum::<f64>() / n,
        max_route_gap: outcomes.iter().map(|o| o.route_gap).fold(0.0, f64::max),
        max_floor_violation: outcomes.iter().map(|o| o.floor_violation).fold(0.0, f64::max),
        clamp_count: outcomes.iter().map(|o| o.clamps).sum(),
    })
}

/// Outcome of the exhaustive minimality check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub cases: usize,
    pub passed: usize,
    /// Feasible sequences enumerated over all cases.
    pub enumerated: u64,
}

impl MinimalityReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.cases
    }
}

/// Checks on random gap paths `A - V` (values on a grid of spacing `step` in
/// `[-2, 2]`) that the running-max envelope is pointwise minimal among all
/// non-negative non-decreasing dominating grid sequences and has the least
/// discounted cost.
pub fn minimality_oracle(n_cases: usize, max_len: usize, step: f64, rho: f64, seed: u64) -> Result<MinimalityReport> {
    if !(step > 0.0) || max_len == 0 || max_len > 8 {
        return Err(RatchetError::InvalidParameter("need step > 0 and 1 <= max_len <= 8".into()));
    }
    let levels = (2.0 / step).round() as i64;
    let mut rng = RngSpec::new(seed, 0).rng();
    let mut passed = 0;
    let mut enumerated = 0;
    for _ in 0..n_cases {
        let len = rng.gen_range(1..=max_len);
        let gap: Vec<i64> = (0..len).map(|_| rng.gen_range(-levels..=levels)).collect();
        let times: Vec<f64> = (0..len).map(|k| k as f64).collect();
        let gap_f: Vec<f64> = gap.iter().map(|&g| g as f64 * step).collect();
        let star = minimal_injection(&gap_f, &vec![0.0; len])?;
        let star_cost = injection_cost(&times, &star, rho)?.stieltjes;
        let top = gap.iter().cloned().max().unwrap_or(0).max(0) + 1;
        let mut ok = true;
        let mut seq = Vec::with_capacity(len);
        enumerate(&gap, top, 0, &mut seq, &mut |cand: &[i64]| {
            enumerated += 1;
            let c: Vec<f64> = cand.iter().map(|&v| v as f64 * step).collect();
            let cost = injection_cost(&times, &c, rho).map(|c| c.stieltjes).unwrap_or(f64::NEG_INFINITY);
            let pointwise = c.iter().zip(&star).all(|(a, b)| a + 1e-12 >= *b);
            if !(pointwise && cost + 1e-12 >= star_cost) {
                ok = false;
            }
        });
        if ok {
            passed += 1;
        }
    }
    Ok(MinimalityReport { cases: n_cases, passed, enumerated })
}

fn enumerate(gap: &[i64], top: i64, floor: i64, seq: &mut Vec<i64>, visit: &mut dyn FnMut(&[i64])) {
    let k = seq.len();
    if k == gap.len() {
        visit(seq);
        return;
    }
    for v in floor.max(gap[k]).max(0)..=top {
        seq.push(v);
        enumerate(gap, top, v, seq, visit);
        seq.pop();
    }
}

/// Report of a run started inside the superhedging region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperhedgeReport {
    pub xi: f64,
    pub x0: f64,
    pub cost: CostReport,
    /// `mean / xi`.
    pub relative_cost: f64,
}

impl SuperhedgeReport {
    /// Mean discounted injection within 1% of `xi(0, z)`.
    pub fn passed(&self) -> bool {
        self.relative_cost <= 0.01
    }
}

/// Runs the feedback strategy from `x0 = multiple * xi(0, z)`.
pub fn superhedge_check(
    solution: &PrimalSolution<'_>,
    table: &PolicyTable,
    z: f64,
    multiple: f64,
    cfg: &SimConfig,
) -> Result<SuperhedgeReport> {
    let xi = solution.xi(0.0, z)?;
    let x0 = multiple * xi;
    let cost = evaluate_strategy(solution.model, Strategy::FeedbackPrimal(table), z, x0, cfg)?;
    Ok(SuperhedgeReport { xi, x0, relative_cost: cost.mean / xi, cost })
}
