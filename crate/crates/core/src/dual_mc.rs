//! Monte Carlo estimators of the dual function `h`, its derivatives and the
//! superhedging threshold `xi`, read off the probabilistic representations.
//!
//! All estimators share one path engine. Path `i` draws its increments from
//! stream `i` of the configured seed, so estimates at neighbouring arguments
//! use common random numbers and finite-difference oracles are sharp.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::model::Model;
use crate::paths::{factor_step, normal_draw, tangent_step, RngSpec, TimeGrid};
use crate::quad;

/// Default maximal time step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Monte Carlo settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: usize,
    /// Time step; `None` selects `min(1e-3 (T - t), 1e-3)`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_true")]
    pub antithetic: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 100_000, dt: None, antithetic: true, seed: 0 }
    }
}

impl McConfig {
    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Step actually used on `[t, T]`.
    pub fn step(&self, t: f64, horizon: f64) -> f64 {
        self.dt.unwrap_or_else(|| (DEFAULT_DT * (horizon - t)).min(DEFAULT_DT))
    }

    pub fn grid(&self, t: f64, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::covering(t, horizon, self.step(t, horizon))
    }
}

/// Point estimate with its standard error.
///
/// With antithetic variates the sampling unit is the antithetic pair, so
/// `std_error` is the pair-mean standard deviation over `sqrt(n_pairs)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub settings: McConfig,
}

impl Estimate {
    fn exact(value: f64, config: &McConfig) -> Self {
        Estimate { value, std_error: 0.0, n_paths: config.n_paths, n_steps: 0, settings: *config }
    }

    /// `|self - other| <= k * combined standard error + slack`.
    pub fn agrees_with(&self, other: f64, k: f64, slack: f64) -> bool {
        (self.value - other).abs() <= k * self.std_error + slack
    }
}

/// All dual quantities estimated from one set of paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualEstimates {
    pub h: Estimate,
    pub h_u: Estimate,
    pub h_uu: Option<Estimate>,
    pub h_z: Estimate,
    pub h_zu: Estimate,
    pub h_t: Estimate,
    pub xi: Estimate,
}

#[derive(Clone, Copy, Default)]
struct Sample {
    h: f64,
    h_u: f64,
    h_uu: f64,
    h_z: f64,
    h_zu: f64,
    h_t: f64,
    xi: f64,
}

impl Sample {
    fn mean_with(self, o: Sample) -> Sample {
        Sample {
            h: 0.5 * (self.h + o.h),
            h_u: 0.5 * (self.h_u + o.h_u),
            h_uu: 0.5 * (self.h_uu + o.h_uu),
            h_z: 0.5 * (self.h_z + o.h_z),
            h_zu: 0.5 * (self.h_zu + o.h_zu),
            h_t: 0.5 * (self.h_t + o.h_t),
            xi: 0.5 * (self.xi + o.xi),
        }
    }
}

/// `Gamma(t)` for remaining time `S = T - t` and passage drift `nu`:
/// `int_0^S (4 alpha pi s)^{-1/2} e^{-nu^2 s/(4 alpha)} ds + S int_S^inf (4 alpha pi s^3)^{-1/2} e^{-nu^2 s/(4 alpha)} ds`.
///
/// The `h_uu` estimator passes `nu = alpha + rho`, the drift of the
/// passage process `-sqrt(2 alpha) B^1 - (alpha - rho) s` after the change of
/// measure that turns `e^{-R}` into a killing-free weight. With `rho = 0` this
/// coincides with `nu = alpha - rho`.
pub fn gamma_weight(alpha: f64, nu: f64, remaining: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(RatchetError::Unsupported("Gamma needs alpha > 0".into()));
    }
    if remaining <= 0.0 {
        return Ok(0.0);
    }
    let c = nu * nu / (4.0 * alpha);
    let norm = 2.0 / (4.0 * alpha * std::f64::consts::PI).sqrt();
    // s = q^2 removes the 1/sqrt(s) singularity of the first integrand.
    let first = quad::integrate(|q| (-c * q * q).exp(), 0.0, remaining.sqrt(), 1e-15, 1e-12).value;
    // s = S / w^2 maps the tail onto (0, 1].
    let cs = c * remaining;
    let second = quad::integrate(
        |w: f64| if w <= 0.0 { 0.0 } else { (-cs / (w * w)).exp() },
        0.0,
        1.0,
        1e-15,
        1e-12,
    )
    .value;
    Ok(norm * first + norm * remaining.sqrt() * second)
}

struct Engine<'a> {
    model: &'a Model,
    t: f64,
    z: f64,
    u: f64,
    grid: TimeGrid,
    gamma_nodes: Option<Vec<f64>>,
}

impl Engine<'_> {
    /// Streams one path; `flip` negates the `B^1` increments.
    fn path(&self, stream: u64, flip: bool, seed: u64) -> Sample {
        let model = self.model;
        let derived = &model.derived;
        let dynamics = model.dynamics();
        let rho = derived.rho;
        let vol = (2.0 * derived.alpha).sqrt();
        let comp = derived.varrho_complement();
        let n = self.grid.n_steps;
        let dt = self.grid.dt();
        let sq = dt.sqrt();
        let mut rng = RngSpec::new(seed, stream).rng();

        let mut m = self.z;
        let mut dm = 1.0;
        let mut b1 = 0.0;
        let mut push = 0.0_f64;
        let mut hit: Option<usize> = if self.u <= 0.0 { Some(0) } else { None };
        let mut m_hit = self.z;
        let tol = 1e-12 * self.u.max(1.0);

        let mut acc = Sample::default();
        for k in 0..=n {
            let s = self.grid.time(k);
            let free = vol * b1 + derived.mu_tilde * (k as f64 * dt);
            if hit.is_none() && -free >= self.u - tol {
                hit = Some(k);
                m_hit = m;
            }
            push = push.max(-self.u - free);
            let r = (self.u + free + push).max(0.0);
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            let disc = (-rho * s).exp();
            let f = model.f(s, m);
            let fz = model.f_z(s, m);
            let er = (-r).exp();
            let g = disc * f * er;
            acc.h -= w * g;
            let gz = disc * fz * dm * er;
            acc.h_z -= w * gz;
            if hit.is_none() {
                acc.h_u += w * g;
                acc.h_zu += w * gz;
            }
            acc.xi += w * (-rho * (s - self.t)).exp() * f * (-free).exp();
            if k == n {
                acc.h_t = disc * f * er;
                break;
            }
            let d1 = sq * normal_draw(&mut rng);
            let d2 = sq * normal_draw(&mut rng);
            let d1 = if flip { -d1 } else { d1 };
            let dw = derived.varrho * d1 + comp * d2;
            dm = tangent_step(dynamics, m, dm, dt, dw);
            m = factor_step(dynamics, m, dt, dw);
            b1 += d1;
        }
        acc.h_t += rho * (-acc.h);
        if let Some(nodes) = &self.gamma_nodes {
            let (k0, m0) = match hit {
                Some(k) => (k, m_hit),
                None => (n, m),
            };
            let s0 = self.grid.time(k0);
            acc.h_uu = (-rho * s0).exp() * model.f(s0, m0) * nodes[k0] - acc.h_u;
        }
        acc
    }
}

fn check_args(model: &Model, t: f64, u: f64) -> Result<()> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(RatchetError::InvalidParameter(format!("u = {u} must be >= 0")));
    }
    if !(t >= 0.0 && t <= model.horizon) {
        return Err(RatchetError::OutOfDomain(format!("t = {t} outside [0, {}]", model.horizon)));
    }
    Ok(())
}

/// Estimates `h, h_u, h_uu, h_z, h_zu, h_t` and `xi` at `(t, z, u)` from one
/// set of paths. `h_uu` is `None` when `alpha = 0`.
pub fn estimate_all(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<DualEstimates> {
    check_args(model, t, u)?;
    let horizon = model.horizon;
    if config.n_paths == 0 {
        return Err(RatchetError::InvalidParameter("n_paths must be positive".into()));
    }
    if t >= horizon {
        let terminal = (-model.rho() * horizon).exp() * model.f(horizon, z) * (-u).exp();
        let zero = Estimate::exact(0.0, config);
        return Ok(DualEstimates {
            h: zero,
            h_u: zero,
            h_uu: (model.alpha() > 0.0).then_some(zero),
            h_z: zero,
            h_zu: zero,
            h_t: Estimate::exact(terminal, config),
            xi: zero,
        });
    }
    let grid = config.grid(t, horizon)?;
    let gamma_nodes = if model.alpha() > 0.0 {
        let passage_drift = model.alpha() + model.rho();
        let nodes: Result<Vec<f64>> = (0..=grid.n_steps)
            .into_par_iter()
            .map(|k| gamma_weight(model.alpha(), passage_drift, horizon - grid.time(k)))
            .collect();
        Some(nodes?)
    } else {
        None
    };
    let engine = Engine { model, t, z, u, grid, gamma_nodes };
    let seed = config.seed;
    let units = if config.antithetic { config.n_paths.div_ceil(2) } else { config.n_paths };
    let samples: Vec<Sample> = (0..units as u64)
        .into_par_iter()
        .map(|i| {
            let a = engine.path(i, false, seed);
            if config.antithetic {
                a.mean_with(engine.path(i, true, seed))
            } else {
                a
            }
        })
        .collect();
    let n_paths = if config.antithetic { 2 * units } else { units };
    let summarize = |pick: fn(&Sample) -> f64| {
        let n = samples.len() as f64;
        let mean = samples.iter().map(pick).sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (pick(s) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate { value: mean, std_error: (var / n).sqrt(), n_paths, n_steps: grid.n_steps, settings: *config }
    };
    Ok(DualEstimates {
        h: summarize(|s| s.h),
        h_u: summarize(|s| s.h_u),
        h_uu: engine.gamma_nodes.as_ref().map(|_| summarize(|s| s.h_uu)),
        h_z: summarize(|s| s.h_z),
        h_zu: summarize(|s| s.h_zu),
        h_t: summarize(|s| s.h_t),
        xi: summarize(|s| s.xi),
    })
}

/// `h(t,z,u) = -E int_t^T e^{-rho s} f(s, M_s) e^{-R_s} ds`.
pub fn h_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, u, config)?.h)
}

/// `h_u(t,z,u) = E int_t^{tau_u ^ T} e^{-rho s} f(s, M_s) e^{-R_s} ds`; exactly 0 at `u = 0`.
pub fn h_u_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, u, config)?.h_u)
}

/// `h_uu(t,z,u) = E[e^{-rho tau0} f(tau0, M_tau0) Gamma(tau0)] - h_u(t,z,u)` with `tau0 = tau_u ^ T`.
pub fn h_uu_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    if !(model.alpha() > 0.0) {
        return Err(RatchetError::Unsupported("h_uu estimator needs alpha > 0".into()));
    }
    estimate_all(model, t, z, u, config)?
        .h_uu
        .ok_or_else(|| RatchetError::Unsupported("h_uu estimator needs alpha > 0".into()))
}

/// Pathwise `h_z = -E int e^{-rho s - R_s} f_z(s, M_s) dM_s/dz ds`.
pub fn h_z_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, u, config)?.h_z)
}

/// Pathwise `h_zu = E int_t^{tau_u ^ T} e^{-rho s - R_s} f_z(s, M_s) dM_s/dz ds`.
pub fn h_zu_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, u, config)?.h_zu)
}

/// `h_t = E[e^{-rho T} f(T, M_T) e^{-R_T}] + rho E int_t^T e^{-rho s} f e^{-R} ds`.
pub fn h_t_mc(model: &Model, t: f64, z: f64, u: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, u, config)?.h_t)
}

/// `xi(t,z) = E int_t^T e^{-rho(s-t)} f(s, M_s) e^{-sqrt(2 alpha)(B^1_s - B^1_t) - (alpha - rho)(s - t)} ds`,
/// the limit of `e^{rho t + u} h_u` as `u` grows.
pub fn xi_mc(model: &Model, t: f64, z: f64, config: &McConfig) -> Result<Estimate> {
    Ok(estimate_all(model, t, z, 0.0, config)?.xi)
}
