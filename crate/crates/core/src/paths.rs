//! Path-level machinery: time grids, per-path random streams, the discrete
//! Skorokhod map, Euler paths of the factor and its tangent, the reflected
//! drifted Brownian motion of the dual problem and its exact law.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::model::{DerivedMarket, FactorCoefficients, FactorDynamics, Model};
use crate::normal;
use crate::quad;
use crate::report::fmt_num;

/// Uniform grid on `[t0, t1]` whose last node is exactly `t1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        if !(t1 > t0) || n_steps == 0 || !t0.is_finite() || !t1.is_finite() {
            return Err(RatchetError::InvalidParameter(format!(
                "time grid needs t1 > t0 and n_steps > 0 (got {t0}, {t1}, {n_steps})"
            )));
        }
        Ok(TimeGrid { t0, t1, n_steps })
    }

    /// Coarsest uniform grid with step at most `max_dt`.
    pub fn covering(t0: f64, t1: f64, max_dt: f64) -> Result<Self> {
        if !(max_dt > 0.0) {
            return Err(RatchetError::InvalidParameter(format!("step {max_dt} must be positive")));
        }
        let n = ((t1 - t0) / max_dt - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(t0, t1, n)
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Seed and stream of one path's random generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws one standard normal.
#[inline]
pub fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Increments of the orthogonal pair `(B^1, B^2)` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DualIncrements {
    pub db1: Vec<f64>,
    pub db2: Vec<f64>,
}

impl DualIncrements {
    /// Draws `(dB^1_k, dB^2_k)` step by step, in that order.
    pub fn sample(grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Self {
        let sq = grid.dt().sqrt();
        let mut db1 = Vec::with_capacity(grid.n_steps);
        let mut db2 = Vec::with_capacity(grid.n_steps);
        for _ in 0..grid.n_steps {
            db1.push(sq * normal_draw(rng));
            db2.push(sq * normal_draw(rng));
        }
        DualIncrements { db1, db2 }
    }

    /// Antithetic partner: `B^1` reflected, `B^2` kept.
    pub fn antithetic(&self) -> Self {
        DualIncrements { db1: self.db1.iter().map(|v| -v).collect(), db2: self.db2.clone() }
    }

    /// Increment of `W^gamma = varrho B^1 + sqrt(1 - varrho^2) B^2` at step `k`.
    pub fn dw_gamma(&self, derived: &DerivedMarket, k: usize) -> f64 {
        derived.varrho * self.db1[k] + derived.varrho_complement() * self.db2[k]
    }

    pub fn cumulative_b1(&self) -> Vec<f64> {
        cumulative(&self.db1)
    }

    pub fn cumulative_b2(&self) -> Vec<f64> {
        cumulative(&self.db2)
    }
}

fn cumulative(inc: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inc.len() + 1);
    let mut s = 0.0;
    out.push(0.0);
    for v in inc {
        s += v;
        out.push(s);
    }
    out
}

/// Discrete Skorokhod map: `reflected[k] = x0 + free[k] + L[k]` with the
/// minimal non-decreasing `L[k] = max(0, max_{j<=k}(-x0 - free[j]))`.
pub fn skorokhod_map(free_path: &[f64], x0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(x0 >= 0.0) {
        return Err(RatchetError::InvalidParameter(format!("initial level {x0} must be >= 0")));
    }
    let mut reflected = Vec::with_capacity(free_path.len());
    let mut local = Vec::with_capacity(free_path.len());
    let mut l = 0.0_f64;
    for &f in free_path {
        l = l.max(-x0 - f);
        reflected.push((x0 + f + l).max(0.0));
        local.push(l);
    }
    Ok((reflected, local))
}

/// One Euler step of the factor.
#[inline]
pub fn factor_step(dynamics: &FactorDynamics, m: f64, dt: f64, dw: f64) -> f64 {
    m + dynamics.drift(m) * dt + dynamics.vol(m) * dw
}

/// One Euler step of the tangent `d(dM) = mu_Z'(M) dM dt + sigma_Z'(M) dM dW^gamma`.
#[inline]
pub fn tangent_step(dynamics: &FactorDynamics, m: f64, dm: f64, dt: f64, dw: f64) -> f64 {
    dm * (1.0 + dynamics.drift_dz(m) * dt + dynamics.vol_dz(m) * dw)
}

/// Euler path of the factor from `M(t0) = z` driven by `varrho B^1 + sqrt(1-varrho^2) B^2`.
pub fn simulate_factor(model: &Model, z: f64, grid: &TimeGrid, inc: &DualIncrements) -> Vec<f64> {
    let dt = grid.dt();
    let mut m = Vec::with_capacity(grid.n_steps + 1);
    m.push(z);
    let mut cur = z;
    for k in 0..grid.n_steps {
        cur = factor_step(model.dynamics(), cur, dt, inc.dw_gamma(&model.derived, k));
        m.push(cur);
    }
    m
}

/// Tangent path `dM/dz` along a factor path simulated with the same increments.
pub fn simulate_tangent(model: &Model, grid: &TimeGrid, inc: &DualIncrements, factor_path: &[f64]) -> Vec<f64> {
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut dm = 1.0;
    out.push(dm);
    for k in 0..grid.n_steps {
        dm = tangent_step(model.dynamics(), factor_path[k], dm, dt, inc.dw_gamma(&model.derived, k));
        out.push(dm);
    }
    out
}

/// Free dual path `sqrt(2 alpha) (B^1_s - B^1_t) + (alpha - rho)(s - t)` at the grid nodes.
pub fn dual_free_path(derived: &DerivedMarket, grid: &TimeGrid, inc: &DualIncrements) -> Vec<f64> {
    let vol = (2.0 * derived.alpha).sqrt();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut b = 0.0;
    out.push(0.0);
    for k in 0..grid.n_steps {
        b += inc.db1[k];
        out.push(vol * b + derived.mu_tilde * (k + 1) as f64 * dt);
    }
    out
}

/// Reflected dual path `R` started at `u` and its local time, via the Skorokhod map.
pub fn simulate_reflected_bm(
    derived: &DerivedMarket,
    u: f64,
    grid: &TimeGrid,
    inc: &DualIncrements,
) -> Result<(Vec<f64>, Vec<f64>)> {
    skorokhod_map(&dual_free_path(derived, grid, inc), u)
}

/// First grid time at which the negated free dual path reaches `u`, capped at `t1`.
pub fn sample_hitting_time(derived: &DerivedMarket, u: f64, grid: &TimeGrid, inc: &DualIncrements) -> f64 {
    if u <= 0.0 {
        return grid.t0;
    }
    let free = dual_free_path(derived, grid, inc);
    let tol = 1e-12 * u.max(1.0);
    free.iter()
        .position(|&f| -f >= u - tol)
        .map(|k| grid.time(k))
        .unwrap_or(grid.t1)
}

/// Exact law of the reflected Brownian motion `R` with variance `2 alpha` and drift `alpha - rho`.
#[derive(Debug)]
pub struct ReflectedBmLaw {
    pub alpha: f64,
    pub rho: f64,
    clamps: AtomicUsize,
}

impl Clone for ReflectedBmLaw {
    fn clone(&self) -> Self {
        ReflectedBmLaw { alpha: self.alpha, rho: self.rho, clamps: AtomicUsize::new(self.clamp_count()) }
    }
}

impl ReflectedBmLaw {
    pub fn new(alpha: f64, rho: f64) -> Self {
        ReflectedBmLaw { alpha, rho, clamps: AtomicUsize::new(0) }
    }

    pub fn from_market(derived: &DerivedMarket) -> Self {
        ReflectedBmLaw::new(derived.alpha, derived.rho)
    }

    pub fn drift(&self) -> f64 {
        self.alpha - self.rho
    }

    /// Number of density values clamped from small negative rounding to zero.
    pub fn clamp_count(&self) -> usize {
        self.clamps.load(Ordering::Relaxed)
    }

    /// `P(R_tau <= m)` for `R_0 = u`.
    pub fn cdf(&self, u: f64, tau: f64, m: f64) -> Result<f64> {
        check_tau(tau)?;
        if m < 0.0 {
            return Ok(0.0);
        }
        let drift = self.drift();
        if self.alpha == 0.0 {
            let r = (u + drift * tau).max(0.0);
            return Ok(if m >= r { 1.0 } else { 0.0 });
        }
        let s = (2.0 * self.alpha * tau).sqrt();
        let d1 = (-u + m - drift * tau) / s;
        let d2 = (-u - m - drift * tau) / s;
        let second = (drift * m / self.alpha + normal::ln_cdf(d2)).exp();
        Ok((normal::cdf(d1) - second).clamp(0.0, 1.0))
    }

    /// Density `psi(m, u, tau)` of `R_tau`; small negative rounding is clamped to zero and counted.
    pub fn density(&self, m: f64, u: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        if self.alpha == 0.0 {
            return Err(RatchetError::Unsupported("density needs alpha > 0".into()));
        }
        if m < 0.0 {
            return Ok(0.0);
        }
        let drift = self.drift();
        let s = (2.0 * self.alpha * tau).sqrt();
        let d1 = (-u + m - drift * tau) / s;
        let d2 = (-u - m - drift * tau) / s;
        let first = normal::pdf(d1) / s;
        let middle = (drift / self.alpha) * (drift * m / self.alpha + normal::ln_cdf(d2)).exp();
        let third = normal::pdf(d1) * (-m * u / (self.alpha * tau)).exp() / s;
        let psi = first - middle + third;
        if psi < 0.0 {
            if psi < -1e-12 {
                return Ok(psi);
            }
            self.clamps.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Ok(psi)
    }

    /// `E[e^{-R_tau}]` by quadrature of `e^{-m} psi(m, u, tau)`.
    pub fn laplace(&self, u: f64, tau: f64) -> Result<f64> {
        if tau == 0.0 {
            return Ok((-u).exp());
        }
        check_tau(tau)?;
        if self.alpha == 0.0 {
            return Ok((-(u + self.drift() * tau).max(0.0)).exp());
        }
        let s = (2.0 * self.alpha * tau).sqrt();
        let centre = (u + self.drift() * tau).max(0.0);
        let lo = (centre - 10.0 * s).max(0.0);
        let hi = centre + 10.0 * s;
        let g = |m: f64| (-m).exp() * self.density(m, u, tau).unwrap_or(0.0);
        let mut total = 0.0;
        if lo > 0.0 {
            total += quad::integrate(g, 0.0, lo, 1e-14, 1e-11).value;
        }
        let mut knots = vec![lo, hi];
        if u > lo && u < hi {
            knots.insert(1, u);
        }
        for w in knots.windows(2) {
            total += quad::integrate(g, w[0], w[1], 1e-14, 1e-11).value;
        }
        total += quad::integrate_to_infinity(g, hi, 1e-15, 1e-11).value;
        Ok(total)
    }

    /// `int_0^inf psi(m, u, tau) dm` by adaptive quadrature (normalization check).
    pub fn total_mass(&self, u: f64, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let s = (2.0 * self.alpha * tau).sqrt();
        let centre = (u + self.drift() * tau).max(0.0);
        let hi = centre + 12.0 * s;
        let g = |m: f64| self.density(m, u, tau).unwrap_or(f64::NAN);
        let mut knots = vec![0.0, hi];
        if u > 0.0 && u < hi {
            knots.insert(1, u);
        }
        let mut total = 0.0;
        for w in knots.windows(2) {
            total += quad::integrate(g, w[0], w[1], 1e-15, 1e-13).value;
        }
        total += quad::integrate_to_infinity(g, hi, 1e-16, 1e-12).value;
        Ok(total)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(RatchetError::InvalidParameter(format!("elapsed time {tau} must be > 0")))
    }
}

/// One simulated trajectory; optional arrays are empty when not simulated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    /// Cumulative `d`-dimensional noise per node (empty for dual paths).
    pub w: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    /// Factor path `M` (or `Z`).
    pub m: Vec<f64>,
    /// Reflected state (`R` for dual paths, the buffer `X` for tracking paths).
    pub x: Vec<f64>,
    /// Local time, including the initial level `x0` as `L(t0)`.
    pub l: Vec<f64>,
    pub dm: Vec<f64>,
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub c: Vec<f64>,
}

/// A batch of paths on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<SimulatedPath>,
}

impl PathBundle {
    /// Dual paths `(B^1, B^2, M, R, L, dM)` started at `(z, u)`; path `i` uses stream `i`.
    pub fn simulate_dual(model: &Model, z: f64, u: f64, grid: TimeGrid, seed: u64, n_paths: usize) -> Result<Self> {
        let mut paths = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let mut rng = RngSpec::new(seed, i as u64).rng();
            let inc = DualIncrements::sample(&grid, &mut rng);
            let m = simulate_factor(model, z, &grid, &inc);
            let dm = simulate_tangent(model, &grid, &inc, &m);
            let (r, l) = simulate_reflected_bm(&model.derived, u, &grid, &inc)?;
            paths.push(SimulatedPath {
                b1: inc.cumulative_b1(),
                b2: inc.cumulative_b2(),
                m,
                l: l.iter().map(|v| u + v).collect(),
                x: r,
                dm,
                ..Default::default()
            });
        }
        Ok(PathBundle { grid, seed, paths })
    }

    /// Writes the bundle as CSV: `path, time, W1..Wd, B1, B2, M, X, L` plus any optional columns.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let first = self.paths.first();
        let d = first.and_then(|p| p.w.first()).map(|w| w.len()).unwrap_or(0);
        let has = |f: fn(&SimulatedPath) -> &Vec<f64>| first.map(|p| !f(p).is_empty()).unwrap_or(false);
        let optional: Vec<(&str, fn(&SimulatedPath) -> &Vec<f64>)> = vec![
            ("dM", |p| &p.dm),
            ("A", |p| &p.a),
            ("V", |p| &p.v),
            ("C", |p| &p.c),
        ];
        let optional: Vec<_> = optional.into_iter().filter(|(_, f)| has(*f)).collect();
        let mut header = vec!["path".to_string(), "time".to_string()];
        header.extend((1..=d).map(|i| format!("W{i}")));
        header.extend(["B1", "B2", "M", "X", "L"].iter().map(|s| s.to_string()));
        header.extend(optional.iter().map(|(n, _)| n.to_string()));
        writeln!(out, "{}", header.join(","))?;
        let times = self.grid.times();
        for (i, p) in self.paths.iter().enumerate() {
            for (k, t) in times.iter().enumerate() {
                let mut row = vec![i.to_string(), fmt_num(*t)];
                if d > 0 {
                    row.extend(p.w[k].iter().map(|v| fmt_num(*v)));
                }
                for arr in [&p.b1, &p.b2, &p.m, &p.x, &p.l] {
                    row.push(arr.get(k).map(|v| fmt_num(*v)).unwrap_or_default());
                }
                for (_, f) in &optional {
                    row.push(f(p).get(k).map(|v| fmt_num(*v)).unwrap_or_default());
                }
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenchmarkSpec, FactorSpec, GrowthRate, MarketParams};

    fn model(mu: f64, rho: f64, dynamics: FactorDynamics) -> Model {
        Model::new(
            MarketParams::one_dim(mu, 1.0, rho, Some(1.0)),
            FactorSpec { dynamics, gamma: vec![1.0], z0: 0.0 },
            BenchmarkSpec { rate: GrowthRate::Constant { c: 1.0 }, a: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn skorokhod_hand_cases() {
        let (r, l) = skorokhod_map(&[0.0, -1.0, -2.0], 0.0).unwrap();
        assert_eq!(r, vec![0.0, 0.0, 0.0]);
        assert_eq!(l, vec![0.0, 1.0, 2.0]);
        let (r, l) = skorokhod_map(&[0.0, 1.0, 2.0], 5.0).unwrap();
        assert_eq!(r, vec![5.0, 6.0, 7.0]);
        assert_eq!(l, vec![0.0, 0.0, 0.0]);
        let (r, l) = skorokhod_map(&[0.0, -1.0, 0.5, -2.0], 0.5).unwrap();
        assert_eq!(r, vec![0.5, 0.0, 1.5, 0.0]);
        assert_eq!(l, vec![0.0, 0.5, 0.5, 1.5]);
        assert!(skorokhod_map(&[0.0], -1.0).is_err());
    }

    #[test]
    fn grid_ends_on_horizon() {
        let g = TimeGrid::covering(0.3, 1.0, 1e-3).unwrap();
        assert_eq!(g.n_steps, 700);
        assert_eq!(g.time(g.n_steps), 1.0);
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn frozen_factor_is_constant() {
        let m = model(0.3, 0.0, FactorDynamics::Constant { drift: 0.0, vol: 0.0 });
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let inc = DualIncrements::sample(&g, &mut RngSpec::new(1, 0).rng());
        assert!(simulate_factor(&m, 2.5, &g, &inc).iter().all(|&v| v == 2.5));
        assert!(simulate_tangent(&m, &g, &inc, &[2.5; 101]).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn deterministic_ou_decay() {
        let m = model(0.3, 0.0, FactorDynamics::OrnsteinUhlenbeck { kappa: 1.0, mean: 0.0, eta: 0.0 });
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let inc = DualIncrements::sample(&g, &mut RngSpec::new(1, 0).rng());
        let path = simulate_factor(&m, 2.0, &g, &inc);
        let exact = 2.0 * (-1.0_f64).exp();
        assert!((path[1000] - exact).abs() < 2.0 * g.dt());
    }

    #[test]
    fn ou_tangent_is_exponential() {
        let m = model(0.3, 0.0, FactorDynamics::OrnsteinUhlenbeck { kappa: 2.0, mean: 0.0, eta: 0.4 });
        let g = TimeGrid::new(0.0, 0.5, 500).unwrap();
        let inc = DualIncrements::sample(&g, &mut RngSpec::new(3, 0).rng());
        let p = simulate_factor(&m, 0.2, &g, &inc);
        let dm = simulate_tangent(&m, &g, &inc, &p);
        assert!((dm[500] - (-1.0_f64).exp()).abs() < 2.0 * g.dt());
    }

    #[test]
    fn deterministic_reflection() {
        let mm = model(0.0, 0.0, FactorDynamics::Constant { drift: 0.0, vol: 0.0 });
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let inc = DualIncrements::sample(&g, &mut RngSpec::new(1, 0).rng());
        let (r, _) = simulate_reflected_bm(&mm.derived, 0.7, &g, &inc).unwrap();
        assert!(r.iter().all(|&v| v == 0.7));

        let mr = model(0.0, 1.0, FactorDynamics::Constant { drift: 0.0, vol: 0.0 });
        let (r, l) = simulate_reflected_bm(&mr.derived, 0.5, &g, &inc).unwrap();
        for (k, t) in g.times().iter().enumerate() {
            assert!((r[k] - (0.5 - t).max(0.0)).abs() < 1e-12);
            assert!((l[k] - (t - 0.5).max(0.0)).abs() < 1e-12);
        }
        let tau = sample_hitting_time(&mr.derived, 0.5, &g, &inc);
        assert!((tau - 0.5).abs() < 1e-12);
        assert_eq!(sample_hitting_time(&mr.derived, 0.0, &g, &inc), 0.0);
    }

    #[test]
    fn hitting_time_matches_local_time_onset() {
        let m = model(0.5, 0.3, FactorDynamics::Constant { drift: 0.0, vol: 0.0 });
        let g = TimeGrid::new(0.0, 2.0, 2000).unwrap();
        for s in 0..50 {
            let inc = DualIncrements::sample(&g, &mut RngSpec::new(11, s).rng());
            let u = 0.2;
            let tau = sample_hitting_time(&m.derived, u, &g, &inc);
            let (_, l) = simulate_reflected_bm(&m.derived, u, &g, &inc).unwrap();
            let onset = l.iter().position(|&v| v > 0.0).map(|k| g.time(k)).unwrap_or(g.t1);
            assert!(onset >= tau);
            assert!(onset - tau <= g.dt() + 1e-12, "{onset} {tau}");
        }
    }

    #[test]
    fn cdf_boundary_values() {
        let law = ReflectedBmLaw::new(0.5, 0.0);
        assert_eq!(law.cdf(0.3, 1.0, 0.0).unwrap(), 0.0);
        assert!((law.cdf(0.3, 1.0, 60.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(law.cdf(0.3, 0.0, 1.0).is_err());
    }

    #[test]
    fn driftless_density_is_half_normal() {
        let law = ReflectedBmLaw::new(0.5, 0.5);
        for m in [0.0, 0.4, 1.3] {
            let tau: f64 = 0.8;
            let s = (2.0 * 0.5 * tau).sqrt();
            let expected = 2.0 * normal::pdf(m / s) / s;
            assert!((law.density(m, 0.0, tau).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn density_is_cdf_derivative() {
        let law = ReflectedBmLaw::new(0.3, 0.7);
        for &(u, tau, m) in &[(0.0, 0.25, 0.1), (0.3, 1.0, 0.5), (1.0, 4.0, 2.0), (0.5, 1.0, 0.05)] {
            let h = 1e-5;
            let fd = (law.cdf(u, tau, m + h).unwrap() - law.cdf(u, tau, m - h).unwrap()) / (2.0 * h);
            assert!((fd - law.density(m, u, tau).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn laplace_limits() {
        let law = ReflectedBmLaw::new(0.5, 0.2);
        assert!((law.laplace(0.4, 0.0).unwrap() - (-0.4_f64).exp()).abs() < 1e-15);
        let tiny = law.laplace(0.4, 1e-8).unwrap();
        assert!((tiny - (-0.4_f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn bundle_csv_has_header() {
        let m = model(0.3, 0.1, FactorDynamics::OrnsteinUhlenbeck { kappa: 1.0, mean: 0.0, eta: 0.3 });
        let b = PathBundle::simulate_dual(&m, 0.0, 0.2, TimeGrid::new(0.0, 1.0, 4).unwrap(), 5, 2).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path,time,B1,B2,M,X,L,dM\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 5);
    }
}
