//! Closed forms for tracking a geometric index.
//!
//! With `dI/I = mu_I dt + sigma_I dW^gamma` the buffer `X = V - I` obeys a
//! ratchet problem with the linear growth rate `lambda I`, and the infinite
//! horizon dual is `v_hat(z, y) = y z - y^g z / g` where `g` is the root in
//! `(0, 1)` of `(mu_I - rho) + (rho - sigma_I gamma' sigma^{-1} mu) g + alpha g (g - 1) = 0`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{RatchetError, Result};
use crate::model::{derive_market, GbmIndexSpec, MarketParams};
use crate::paths::ReflectedBmLaw;
use crate::quad;
use crate::report::CsvTable;

/// Roots of the exponent quadratic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaRoots {
    /// Negative companion root (`-inf` when the quadratic degenerates to a line).
    pub gamma1: f64,
    pub gamma2: f64,
    /// `|q(gamma2)|` for the quadratic `q`.
    pub residual: f64,
}

/// Coefficients `(a, b, c)` of `a g^2 + b g + c`.
fn quadratic(alpha: f64, rho: f64, mu_i: f64, cross: f64) -> (f64, f64, f64) {
    (alpha, rho - cross - alpha, mu_i - rho)
}

/// Solves the exponent quadratic for the root in `(0, 1)`.
///
/// Requires `rho > mu_I` and `lambda > 0`. Uses the cancellation-free form of
/// the quadratic formula.
pub fn solve_gamma2(market: &MarketParams, index: &GbmIndexSpec) -> Result<GammaRoots> {
    let derived = derive_market(market, &index.factor())?;
    let lambda = index.lambda(market)?;
    roots(derived.alpha, market.rho, index.mu_i, index.sigma_i * derived.phi_coeff, lambda)
}

fn roots(alpha: f64, rho: f64, mu_i: f64, cross: f64, lambda: f64) -> Result<GammaRoots> {
    if rho <= mu_i {
        return Err(RatchetError::Unsupported(format!(
            "closed form needs rho > mu_I (rho = {rho}, mu_I = {mu_i})"
        )));
    }
    if lambda <= 0.0 {
        return Err(RatchetError::Unsupported(format!("closed form needs lambda > 0 (lambda = {lambda})")));
    }
    let (a, b, c) = quadratic(alpha, rho, mu_i, cross);
    let (gamma1, gamma2) = if a == 0.0 {
        (f64::NEG_INFINITY, -c / b)
    } else {
        let disc = (b * b - 4.0 * a * c).sqrt();
        let q = -0.5 * (b + b.signum() * disc);
        let (r1, r2) = (q / a, c / q);
        (r1.min(r2), r1.max(r2))
    };
    let residual = (a * gamma2 * gamma2 + b * gamma2 + c).abs();
    if !(gamma2 > 0.0 && gamma2 < 1.0) {
        return Err(RatchetError::Degenerate(format!("exponent root {gamma2} outside (0, 1)")));
    }
    Ok(GammaRoots { gamma1, gamma2, residual })
}

/// The `sigma_I = 0` exponent `(alpha - rho + sqrt((rho - alpha)^2 + 4 alpha (rho - mu_I))) / (2 alpha)`.
pub fn gamma0(alpha: f64, rho: f64, mu_i: f64) -> f64 {
    if alpha == 0.0 {
        return (rho - mu_i) / rho;
    }
    (alpha - rho + ((rho - alpha).powi(2) + 4.0 * alpha * (rho - mu_i)).sqrt()) / (2.0 * alpha)
}

/// Infinite-horizon solution of the geometric index-tracking problem.
#[derive(Clone, Debug, Serialize)]
pub struct GbmSolution {
    pub roots: Option<GammaRoots>,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub mu_i: f64,
    pub sigma_i: f64,
    /// `lambda < 0`: the index is dominated for free, `v = 0` and `theta_bar = 0`.
    pub trivial: bool,
    merton: DVector<f64>,
    hedge: DVector<f64>,
    sigma_gamma: DVector<f64>,
    index_shift: DVector<f64>,
}

impl GbmSolution {
    pub fn new(market: &MarketParams, index: &GbmIndexSpec) -> Result<Self> {
        index.validate(market)?;
        let derived = derive_market(market, &index.factor())?;
        let lambda = index.lambda(market)?;
        let trivial = lambda < 0.0;
        let roots = if trivial {
            None
        } else {
            Some(roots(derived.alpha, market.rho, index.mu_i, index.sigma_i * derived.phi_coeff, lambda)?)
        };
        let gamma = DVector::from_column_slice(&index.gamma);
        Ok(GbmSolution {
            roots,
            lambda,
            alpha: derived.alpha,
            rho: market.rho,
            mu_i: index.mu_i,
            sigma_i: index.sigma_i,
            trivial,
            merton: derived.merton.clone(),
            hedge: derived.hedge.clone(),
            sigma_gamma: market.sigma_matrix() * gamma,
            index_shift: derived.index_shift.clone(),
        })
    }

    /// The exponent `gamma2` (`gamma0` when `sigma_I = 0`).
    pub fn gamma2(&self) -> Option<f64> {
        self.roots.map(|r| r.gamma2)
    }

    fn check(z: f64, x: f64) -> Result<()> {
        if !(z > 0.0) || !(x >= 0.0) {
            return Err(RatchetError::OutOfDomain(format!("closed form needs z > 0 and x >= 0, got ({z}, {x})")));
        }
        Ok(())
    }

    /// `v(z, x) = z (g - 1)/g (1 + x/z)^{g/(g-1)}`.
    pub fn value(&self, z: f64, x: f64) -> Result<f64> {
        Self::check(z, x)?;
        let Some(g) = self.gamma2() else { return Ok(0.0) };
        Ok(z * (g - 1.0) / g * (1.0 + x / z).powf(g / (g - 1.0)))
    }

    /// `v_x(z, x) = (1 + x/z)^{1/(g-1)}`, which is also the dual minimiser `y*`.
    pub fn v_x(&self, z: f64, x: f64) -> Result<f64> {
        Self::check(z, x)?;
        let Some(g) = self.gamma2() else { return Ok(0.0) };
        Ok((1.0 + x / z).powf(1.0 / (g - 1.0)))
    }

    pub fn ystar(&self, z: f64, x: f64) -> Result<f64> {
        self.v_x(z, x)
    }

    /// Dual value `v_hat(z, y) = y z - y^g z / g`.
    pub fn vhat(&self, z: f64, y: f64) -> f64 {
        match self.gamma2() {
            Some(g) => y * z - y.powf(g) * z / g,
            None => 0.0,
        }
    }

    /// All derivatives `(v, v_x, v_xx, v_z, v_zz, v_xz)` in closed form.
    pub fn derivatives(&self, z: f64, x: f64) -> Result<[f64; 6]> {
        Self::check(z, x)?;
        let Some(g) = self.gamma2() else { return Ok([0.0; 6]) };
        let w = 1.0 + x / z;
        let p = 1.0 / (g - 1.0);
        let q = g / (g - 1.0);
        let c = (g - 1.0) / g;
        let v = c * z * w.powf(q);
        let v_x = w.powf(p);
        let v_xx = p * w.powf(p - 1.0) / z;
        let v_xz = -v_xx * x / z;
        let v_z = c * w.powf(q - 1.0) * (w + q - q * w);
        // d/dz of c w^{q-1} (q - (q-1) w) with dw/dz = -(w-1)/z.
        let dw = -(w - 1.0) / z;
        let v_zz = c * dw * ((q - 1.0) * w.powf(q - 2.0) * (q - (q - 1.0) * w) - (q - 1.0) * w.powf(q - 1.0));
        Ok([v, v_x, v_xx, v_z, v_zz, v_xz])
    }

    /// Optimal buffer portfolio `theta_bar* = -(g-1)(x+z)(ss')^{-1} mu + sigma_I x (ss')^{-1} s gamma`.
    pub fn theta_bar(&self, z: f64, x: f64) -> Result<DVector<f64>> {
        Self::check(z, x)?;
        let Some(g) = self.gamma2() else { return Ok(DVector::zeros(self.merton.len())) };
        Ok(&self.merton * (-(g - 1.0) * (x + z)) + &self.hedge * (self.sigma_i * x))
    }

    /// Allocation-free [`GbmSolution::theta_bar`] for simulation loops; `x` and `z` are not checked.
    pub fn theta_bar_into(&self, z: f64, x: f64, out: &mut [f64]) {
        let Some(g) = self.gamma2() else {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        };
        let a = -(g - 1.0) * (x + z);
        let b = self.sigma_i * x;
        for (i, o) in out.iter_mut().enumerate() {
            *o = a * self.merton[i] + b * self.hedge[i];
        }
    }

    /// The published form `-(g-1)(x+z)(ss')^{-1} mu + (g-1) sigma_I (z^3/x + z^2) s gamma`.
    ///
    /// Singular at `x = 0` when `sigma_I > 0`.
    pub fn theta_bar_printed(&self, z: f64, x: f64) -> Result<DVector<f64>> {
        Self::check(z, x)?;
        let Some(g) = self.gamma2() else { return Ok(DVector::zeros(self.merton.len())) };
        let first = &self.merton * (-(g - 1.0) * (x + z));
        if self.sigma_i == 0.0 {
            return Ok(first);
        }
        if x == 0.0 {
            return Err(RatchetError::OutOfDomain("printed portfolio is singular at x = 0".into()));
        }
        Ok(first + &self.sigma_gamma * ((g - 1.0) * self.sigma_i * (z * z * z / x + z * z)))
    }

    /// Tradable portfolio `theta = theta_bar + sigma_I I sigma^{-T} gamma` at index level `z`.
    pub fn to_tradable(&self, z: f64, theta_bar: &DVector<f64>) -> DVector<f64> {
        theta_bar + &self.index_shift * (self.sigma_i * z)
    }

    pub fn theta(&self, z: f64, x: f64) -> Result<DVector<f64>> {
        Ok(self.to_tradable(z, &self.theta_bar(z, x)?))
    }

    /// Stationary generator `-rho v + L^theta v - lambda z v_x + mu_I z v_z + sigma_I^2 z^2 v_zz / 2`
    /// evaluated at the closed-form portfolio; zero for an exact solution.
    pub fn stationary_hjb_residual(&self, market: &MarketParams, z: f64, x: f64) -> Result<f64> {
        let [v, v_x, v_xx, v_z, v_zz, v_xz] = self.derivatives(z, x)?;
        let th = self.theta_bar(z, x)?;
        let mu = market.mu_vector();
        let st = market.sigma_matrix().transpose() * &th;
        let control = th.dot(&mu) * v_x + 0.5 * st.norm_squared() * v_xx + self.sigma_i * z * th.dot(&self.sigma_gamma) * v_xz;
        Ok(-self.rho * v + control - self.lambda * z * v_x
            + self.mu_i * z * v_z
            + 0.5 * self.sigma_i * self.sigma_i * z * z * v_zz)
    }
}

/// Superhedging threshold `xi(t, z) = z (e^{lambda (T-t)} - 1)` of the linear benchmark.
pub fn xi_closed_form(lambda: f64, z: f64, remaining: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    z * (lambda * remaining).exp_m1()
}

/// Published piecewise threshold `lambda z [e^{k tau} - 1]/k` with `k = 2 alpha + mu_I - 2 rho`,
/// and `lambda z tau` on the branch `k = 0`.
pub fn xi_printed(alpha: f64, rho: f64, mu_i: f64, lambda: f64, z: f64, remaining: f64) -> f64 {
    let k = 2.0 * alpha + mu_i - 2.0 * rho;
    if k.abs() < 1e-12 {
        lambda * z * remaining
    } else {
        lambda * z * (k * remaining).exp_m1() / k
    }
}

/// Finite-horizon dual value for `sigma_I = 0` at dual points `y` in `(0, 1]`:
/// `-lambda z int_t^T int_0^inf e^{(mu_I - rho)(s-t) - m} psi(m, -ln y, s-t) dm ds`.
pub fn finite_horizon_sigma0(
    market: &MarketParams,
    index: &GbmIndexSpec,
    t: f64,
    z: f64,
    ys: &[f64],
) -> Result<Vec<f64>> {
    if index.sigma_i != 0.0 {
        return Err(RatchetError::Unsupported("finite-horizon closed form needs sigma_I = 0".into()));
    }
    let horizon = market
        .horizon
        .ok_or_else(|| RatchetError::InvalidParameter("finite-horizon closed form needs a horizon".into()))?;
    if !(t >= 0.0 && t <= horizon) {
        return Err(RatchetError::OutOfDomain(format!("t = {t} outside [0, {horizon}]")));
    }
    let derived = derive_market(market, &index.factor())?;
    let lambda = index.lambda(market)?;
    let law = ReflectedBmLaw::from_market(&derived);
    let decay = index.mu_i - market.rho;
    ys.iter()
        .map(|&y| {
            if !(y > 0.0 && y <= 1.0) {
                return Err(RatchetError::OutOfDomain(format!("dual point {y} outside (0, 1]")));
            }
            if t == horizon {
                return Ok(0.0);
            }
            let u = -y.ln();
            let inner = |tau: f64| -> f64 {
                if tau <= 0.0 {
                    return (-u).exp();
                }
                let g = |m: f64| (-m).exp() * law.density(m, u, tau).unwrap_or(0.0);
                let near = if u > 0.0 { quad::integrate(g, 0.0, u, 1e-13, 1e-10).value } else { 0.0 };
                let mass = near + quad::integrate_to_infinity(g, u, 1e-12, 1e-10).value;
                (decay * tau).exp() * mass
            };
            let outer = quad::integrate(inner, 0.0, horizon - t, 1e-11, 1e-9).value;
            Ok(-lambda * z * outer)
        })
        .collect()
}

/// Parameter set used by the figure sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FigureParams {
    pub mu: f64,
    pub sigma: f64,
    pub sigma_i: f64,
    pub mu_i: f64,
    pub rho: f64,
    pub gamma: f64,
    pub z: f64,
}

impl Default for FigureParams {
    fn default() -> Self {
        FigureParams { mu: 0.3, sigma: 1.0, sigma_i: 0.25, mu_i: 1.0, rho: 2.0, gamma: 1.0, z: 1.0 }
    }
}

impl FigureParams {
    fn market(&self) -> MarketParams {
        MarketParams::one_dim(self.mu, self.sigma, self.rho, None)
    }

    fn index(&self) -> GbmIndexSpec {
        GbmIndexSpec { mu_i: self.mu_i, sigma_i: self.sigma_i, z0: self.z, gamma: vec![self.gamma] }
    }
}

/// Name of the swept parameter and its values for figures 1 to 4.
pub fn figure_parameters(figure: u8) -> Result<(&'static str, [f64; 3])> {
    match figure {
        1 => Ok(("mu_i", [0.8, 1.0, 1.2])),
        2 => Ok(("sigma_i", [0.1, 0.25, 0.4])),
        3 => Ok(("mu", [0.2, 0.3, 0.4])),
        4 => Ok(("sigma", [0.8, 1.0, 1.2])),
        _ => Err(RatchetError::InvalidParameter(format!("figure id {figure} not in 1..=4"))),
    }
}

/// One monotonicity assertion on a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Sweep output: a CSV table and the trend assertions it supports.
#[derive(Clone, Debug, Serialize)]
pub struct FigureSweep {
    pub figure: u8,
    pub parameter: String,
    pub table: CsvTable,
    pub trends: Vec<TrendCheck>,
}

impl FigureSweep {
    pub fn passed(&self) -> bool {
        self.trends.iter().all(|t| t.passed)
    }
}

/// Tabulates `v(z, x)` and the tradable `theta*(z, x)` per swept parameter value.
///
/// Columns: `x, param_value, v, theta_star, theta_star_printed, regime_ok`. Rows
/// that violate `rho > mu_I` or `lambda > 0` carry `regime_ok = 0` and NaN values.
pub fn figure_sweep(figure: u8, xs: &[f64]) -> Result<FigureSweep> {
    let (name, values) = figure_parameters(figure)?;
    let mut table = CsvTable::new(["x", "param_value", "v", "theta_star", "theta_star_printed", "regime_ok"]);
    let mut v_cols = Vec::new();
    let mut th_cols = Vec::new();
    for &value in &values {
        let mut p = FigureParams::default();
        match name {
            "mu_i" => p.mu_i = value,
            "sigma_i" => p.sigma_i = value,
            "mu" => p.mu = value,
            _ => p.sigma = value,
        }
        let sol = GbmSolution::new(&p.market(), &p.index()).ok().filter(|s| !s.trivial);
        let mut vs = Vec::with_capacity(xs.len());
        let mut ths = Vec::with_capacity(xs.len());
        for &x in xs {
            let row = sol.as_ref().and_then(|s| {
                let v = s.value(p.z, x).ok()?;
                let th = s.theta(p.z, x).ok()?[0];
                let printed = s
                    .theta_bar_printed(p.z, x)
                    .map(|t| s.to_tradable(p.z, &t)[0])
                    .unwrap_or(f64::NAN);
                Some((v, th, printed))
            });
            let (v, th, printed, ok) = match row {
                Some((v, th, pr)) => (v, th, pr, 1.0),
                None => (f64::NAN, f64::NAN, f64::NAN, 0.0),
            };
            table.push(vec![x, value, v, th, printed, ok]);
            vs.push(v);
            ths.push(th);
        }
        v_cols.push(vs);
        th_cols.push(ths);
    }
    let trends = figure_trends(figure, name, xs, &v_cols, &th_cols);
    Ok(FigureSweep { figure, parameter: name.to_string(), table, trends })
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Up,
    Down,
}

fn monotone(cols: &[Vec<f64>], dir: Direction) -> (bool, usize) {
    let mut bad = 0;
    for i in 0..cols[0].len() {
        for w in cols.windows(2) {
            let ok = match dir {
                Direction::Up => w[1][i] > w[0][i],
                Direction::Down => w[1][i] < w[0][i],
            };
            if !ok {
                bad += 1;
            }
        }
    }
    (bad == 0, bad)
}

fn trend(name: String, cols: &[Vec<f64>], dir: Direction) -> TrendCheck {
    let (passed, bad) = monotone(cols, dir);
    let word = if dir == Direction::Up { "increasing" } else { "decreasing" };
    TrendCheck { name, passed, detail: format!("{bad} of {} comparisons not {word}", cols[0].len() * (cols.len() - 1)) }
}

fn figure_trends(figure: u8, name: &str, xs: &[f64], v: &[Vec<f64>], th: &[Vec<f64>]) -> Vec<TrendCheck> {
    use Direction::{Down, Up};
    match figure {
        1 => {
            let mut signs = (0, 0);
            for i in 0..xs.len() {
                let d = th[2][i] - th[0][i];
                if d < 0.0 {
                    signs.0 += 1;
                } else if d > 0.0 {
                    signs.1 += 1;
                }
            }
            vec![
                trend(format!("v decreasing in {name}"), v, Down),
                TrendCheck {
                    name: format!("theta* crosses in {name}"),
                    passed: signs.0 > 0 && signs.1 > 0,
                    detail: format!("{} x with theta* falling, {} with theta* rising", signs.0, signs.1),
                },
            ]
        }
        2 => vec![trend(format!("v increasing in {name}"), v, Up), trend(format!("theta* decreasing in {name}"), th, Down)],
        3 => vec![trend(format!("v increasing in {name}"), v, Up), trend(format!("theta* increasing in {name}"), th, Up)],
        _ => vec![trend(format!("v decreasing in {name}"), v, Down), trend(format!("theta* decreasing in {name}"), th, Down)],
    }
}

/// Default wealth grid `x = 0.05, 0.10, ..., 5`.
pub fn default_figure_grid() -> Vec<f64> {
    (1..=100).map(|i| 0.05 * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption() -> (MarketParams, GbmIndexSpec) {
        let p = FigureParams::default();
        (p.market(), p.index())
    }

    #[test]
    fn gamma2_matches_quadratic_formula() {
        let (market, index) = caption();
        let r = solve_gamma2(&market, &index).unwrap();
        let (a, b, c): (f64, f64, f64) = (0.045, 2.0 - 0.075 - 0.045, -1.0);
        let oracle = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((r.gamma2 - oracle).abs() < 1e-12);
        assert!(r.residual <= 1e-12);
        assert!(r.gamma1 < 0.0 && r.gamma2 > 0.0 && r.gamma2 < 1.0);
    }

    #[test]
    fn sigma_zero_reduces_to_gamma0() {
        let (market, mut index) = caption();
        index.sigma_i = 0.0;
        let r = solve_gamma2(&market, &index).unwrap();
        let g0 = gamma0(0.045, 2.0, 1.0);
        assert!((r.gamma2 - g0).abs() < 1e-12);
        let expected = (0.045 - 2.0 + (1.955f64.powi(2) + 0.18).sqrt()) / 0.09;
        assert!((g0 - expected).abs() < 1e-12);
    }

    #[test]
    fn gamma2_vanishes_as_mu_i_approaches_rho() {
        let (market, mut index) = caption();
        index.mu_i = 2.0 - 1e-9;
        let r = solve_gamma2(&market, &index).unwrap();
        assert!(r.gamma2 > 0.0 && r.gamma2 < 1e-8);
        index.mu_i = 2.0;
        assert!(matches!(solve_gamma2(&market, &index), Err(RatchetError::Unsupported(_))));
    }

    #[test]
    fn value_shape() {
        let (market, index) = caption();
        let s = GbmSolution::new(&market, &index).unwrap();
        assert_eq!(s.v_x(2.0, 0.0).unwrap(), 1.0);
        assert!(s.value(1.0, 0.3).unwrap() < 0.0);
        assert!(s.value(1.0, 1e8).unwrap().abs() < 1e-3);
        let g = s.gamma2().unwrap();
        for &(z, x) in &[(1.0, 0.5), (2.0, 3.0), (0.3, 0.01)] {
            let y = s.ystar(z, x).unwrap();
            assert!(y < 1.0);
            assert!((y.powf(g - 1.0) - (1.0 + x / z)).abs() < 1e-12);
            // Legendre duality v(x) = v_hat(y*) + x y*.
            assert!((s.value(z, x).unwrap() - s.vhat(z, y) - x * y).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (market, index) = caption();
        let s = GbmSolution::new(&market, &index).unwrap();
        let (z, x, h) = (1.3, 0.7, 1e-4);
        let v = |z: f64, x: f64| s.value(z, x).unwrap();
        let d = s.derivatives(z, x).unwrap();
        let fd = [
            v(z, x),
            (v(z, x + h) - v(z, x - h)) / (2.0 * h),
            (v(z, x + h) - 2.0 * v(z, x) + v(z, x - h)) / (h * h),
            (v(z + h, x) - v(z - h, x)) / (2.0 * h),
            (v(z + h, x) - 2.0 * v(z, x) + v(z - h, x)) / (h * h),
            (v(z + h, x + h) - v(z + h, x - h) - v(z - h, x + h) + v(z - h, x - h)) / (4.0 * h * h),
        ];
        for (a, b) in d.iter().zip(fd.iter()) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn stationary_residual_vanishes() {
        let (market, index) = caption();
        let s = GbmSolution::new(&market, &index).unwrap();
        for &(z, x) in &[(1.0, 0.0), (1.0, 0.5), (2.0, 4.0), (0.4, 0.1)] {
            let r = s.stationary_hjb_residual(&market, z, x).unwrap();
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn portfolio_cases() {
        let (market, mut index) = caption();
        index.sigma_i = 0.0;
        let s = GbmSolution::new(&market, &index).unwrap();
        let g0 = s.gamma2().unwrap();
        let th = s.theta_bar(1.0, 0.0).unwrap()[0];
        assert!((th - (-(g0 - 1.0) * 0.3)).abs() < 1e-14);
        assert!(th > 0.0);
        let a = s.theta_bar(1.5, 0.6).unwrap()[0];
        let b = s.theta_bar(3.0, 1.2).unwrap()[0];
        assert!((b - 2.0 * a).abs() < 1e-12);

        let zero = GbmSolution::new(&MarketParams::one_dim(0.0, 1.0, 2.0, None), &index).unwrap();
        assert_eq!(zero.theta_bar(1.0, 0.4).unwrap()[0], 0.0);

        let (market, index) = caption();
        let s = GbmSolution::new(&market, &index).unwrap();
        assert!(s.theta_bar_printed(1.0, 0.0).is_err());
        assert!(s.theta_bar(1.0, 0.0).is_ok());
        let a = s.theta_bar(0.5, 0.2).unwrap()[0];
        let b = s.theta_bar(1.5, 0.6).unwrap()[0];
        assert!((b - 3.0 * a).abs() < 1e-12);
    }

    #[test]
    fn negative_lambda_is_trivial() {
        let market = MarketParams::one_dim(0.3, 1.0, 2.0, None);
        let index = GbmIndexSpec { mu_i: 0.05, sigma_i: 0.5, z0: 1.0, gamma: vec![1.0] };
        let s = GbmSolution::new(&market, &index).unwrap();
        assert!(s.trivial);
        assert_eq!(s.value(1.0, 0.5).unwrap(), 0.0);
        assert_eq!(s.theta_bar(1.0, 0.5).unwrap()[0], 0.0);
    }

    #[test]
    fn xi_forms() {
        assert!((xi_closed_form(0.5, 2.0, 1.0) - 2.0 * (0.5f64.exp() - 1.0)).abs() < 1e-14);
        assert_eq!(xi_printed(1.0, 1.5, 1.0, 0.7, 2.0, 0.5), 0.7 * 2.0 * 0.5);
        // alpha = rho and sigma_I = 0: lambda = mu_I and the two forms coincide.
        let a = xi_printed(0.3, 0.3, 0.4, 0.4, 1.0, 0.8);
        assert!((a - xi_closed_form(0.4, 1.0, 0.8)).abs() < 1e-14);
    }

    #[test]
    fn finite_horizon_edges() {
        let market = MarketParams::one_dim(0.3, 1.0, 0.5, Some(1.0));
        let index = GbmIndexSpec { mu_i: 0.4, sigma_i: 0.0, z0: 1.0, gamma: vec![1.0] };
        assert_eq!(finite_horizon_sigma0(&market, &index, 1.0, 1.0, &[0.5]).unwrap(), vec![0.0]);
        let v = finite_horizon_sigma0(&market, &index, 0.0, 1.0, &[1.0, 0.5, 0.1]).unwrap();
        assert!(v.iter().all(|&x| x < 0.0));
        // Dual value is convex in y and its slope vanishes at y = 1.
        let h = 1e-3;
        let w = finite_horizon_sigma0(&market, &index, 0.0, 1.0, &[0.5 - h, 0.5, 0.5 + h, 1.0 - h]).unwrap();
        assert!(w[0] - 2.0 * w[1] + w[2] > 0.0);
        assert!(((v[0] - w[3]) / h).abs() < 0.05 * v[0].abs());
    }

    #[test]
    fn sweep_values_and_trends_available() {
        let s = figure_sweep(1, &default_figure_grid()).unwrap();
        assert_eq!(s.table.rows.len(), 300);
        assert!(s.trends[0].passed, "{:?}", s.trends);
        assert!(figure_sweep(5, &[1.0]).is_err());
    }
}
