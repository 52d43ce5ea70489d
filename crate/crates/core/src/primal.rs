//! Primal quantities recovered from a dual field: the value `v`, the optimal
//! dual point `y*`, the superhedging threshold `xi`, the feedback portfolio
//! and the value of the original tracking problem.
//!
//! Inside the region `O_T = {x < xi(t,z)}` the inverse transform reads
//! `v(t,z,x) = v_hat(t,z,y*) + x y*` with `v_hat_y(t,z,y*) = -x`; outside it
//! `v = 0`. In the buffer coordinate `u* = -ln y*` this is `e^{rho t} g(u*) = x`
//! with `g = e^{u} h_u`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dual_pde::{DualField, DualSlice};
use crate::error::{RatchetError, Result};
use crate::interp::bracket;
use crate::model::{FactorCoefficients, Model};
use crate::report::CsvTable;

/// Primal quantities at one `(t, z, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub t: f64,
    pub z: f64,
    pub x: f64,
    pub xi: f64,
    pub in_region: bool,
    pub ystar: f64,
    pub v: f64,
    pub v_x: f64,
    /// `v_xx = -1 / v_hat_yy(y*)`; `None` outside `O_T`.
    pub v_xx: Option<f64>,
    pub theta: Vec<f64>,
}

/// Nonlinear HJB residual and the local scale it is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    pub residual: f64,
    /// `|f(t,z) v_x|`.
    pub scale: f64,
}

impl HjbResidual {
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale.max(1e-300)
    }
}

/// Primal evaluator over a solved dual field.
#[derive(Clone, Copy, Debug)]
pub struct PrimalSolution<'a> {
    pub model: &'a Model,
    pub field: &'a DualField,
}

impl<'a> PrimalSolution<'a> {
    pub fn new(model: &'a Model, field: &'a DualField) -> Result<Self> {
        let h = field.meta.horizon;
        if (h - model.horizon).abs() > 1e-9 * h.max(1.0) || (field.meta.rho - model.rho()).abs() > 1e-12 {
            return Err(RatchetError::GridMismatch("dual field was solved for a different model".into()));
        }
        Ok(PrimalSolution { model, field })
    }

    fn growth(&self, t: f64) -> f64 {
        (self.model.rho() * t).exp()
    }

    /// `xi(t, z)` read from the grid.
    pub fn xi(&self, t: f64, z: f64) -> Result<f64> {
        self.field.xi(t, z)
    }

    fn slice(&self, t: f64, z: f64) -> Result<DualSlice> {
        self.field.slice(t, z)
    }

    /// Optimal dual point `y*` in `(0, 1]`; [`RatchetError::OutOfRegion`] when `x >= xi(t,z)`.
    pub fn ystar(&self, t: f64, z: f64, x: f64) -> Result<f64> {
        check_x(x)?;
        let s = self.slice(t, z)?;
        Ok((-ustar(&s, x, self.growth(t))?).exp())
    }

    /// `v(t, z, x)`.
    pub fn primal_value(&self, t: f64, z: f64, x: f64) -> Result<f64> {
        check_x(x)?;
        if t >= self.model.horizon {
            return Ok(0.0);
        }
        let s = self.slice(t, z)?;
        value_on_slice(&s, x, self.growth(t))
    }

    /// All primal quantities at `(t, z, x)`, including the feedback portfolio.
    pub fn point(&self, t: f64, z: f64, x: f64) -> Result<PrimalPoint> {
        check_x(x)?;
        let s = self.slice(t, z)?;
        self.point_on_slice(&s, x)
    }

    fn point_on_slice(&self, s: &DualSlice, x: f64) -> Result<PrimalPoint> {
        let (t, z) = (s.t, s.z);
        let growth = self.growth(t);
        let xi = growth * s.g_limit();
        let derived = &self.model.derived;
        let sigma_z = self.model.dynamics().vol(z);
        match ustar(s, x, growth) {
            Ok(u) => {
                let y = (-u).exp();
                let p = s.eval_u(u)?;
                let (_, g_u) = s.g(u);
                // y* v_hat_yy = e^{rho t} g'(u*), finite up to the region boundary.
                let y_vyy = growth * g_u;
                let theta = &derived.merton * y_vyy - &derived.hedge * (sigma_z * p.vhat_yz);
                Ok(PrimalPoint {
                    t,
                    z,
                    x,
                    xi,
                    in_region: true,
                    ystar: y,
                    v: p.vhat + x * y,
                    v_x: y,
                    v_xx: (p.vhat_yy > 0.0).then(|| -1.0 / p.vhat_yy),
                    theta: theta.iter().copied().collect(),
                })
            }
            Err(RatchetError::OutOfRegion { .. }) => {
                let theta = outside_theta(self.model, s, growth);
                Ok(PrimalPoint {
                    t,
                    z,
                    x,
                    xi,
                    in_region: false,
                    ystar: 0.0,
                    v: 0.0,
                    v_x: 0.0,
                    v_xx: None,
                    theta: theta.iter().copied().collect(),
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Feedback portfolio `theta*(t, z, x)`.
    ///
    /// Inside `O_T`: `(ss')^{-1} mu y* v_hat_yy - (ss')^{-1} s gamma sigma_Z(z) v_hat_yz`.
    /// Outside: the `y -> 0` limit `(ss')^{-1} s gamma sigma_Z(z) xi_z(t,z)`.
    pub fn optimal_theta(&self, t: f64, z: f64, x: f64) -> Result<Vec<f64>> {
        Ok(self.point(t, z, x)?.theta)
    }

    /// Value of the original problem at time 0: the minimal expected
    /// discounted injection `u(a, v0, z)`.
    pub fn original_value(&self, a: f64, v0: f64, z: f64) -> Result<f64> {
        if !(a >= 0.0 && v0 >= 0.0) {
            return Err(RatchetError::InvalidParameter("benchmark level and wealth must be >= 0".into()));
        }
        if a >= v0 {
            Ok(a - v0 - self.primal_value(0.0, z, 0.0)?)
        } else {
            Ok(-self.primal_value(0.0, z, v0 - a)?)
        }
    }

    /// Residual of
    /// `v_t - rho v - alpha v_x^2/v_xx + sigma_Z^2/2 (v_zz - v_xz^2/v_xx) - phi v_x v_xz/v_xx + mu_Z v_z - f v_x`
    /// with the partials of `v` taken from the dual identities
    /// `v_x = y*`, `v_xx = -1/v_hat_yy`, `v_xz = -v_hat_yz/v_hat_yy`,
    /// `v_t = v_hat_t`, `v_z = v_hat_z`, `v_zz = v_hat_zz + v_xz^2/v_xx`.
    pub fn hjb_residual(&self, t: f64, z: f64, x: f64) -> Result<HjbResidual> {
        let field = self.field;
        let horizon = self.model.horizon;
        let s = self.slice(t, z)?;
        let growth = self.growth(t);
        let u = ustar(&s, x, growth)?;
        let y = (-u).exp();
        let p = s.eval_u(u)?;
        if !(p.vhat_yy > 0.0) {
            return Err(RatchetError::Degenerate(format!("v_xx >= 0 at (t={t}, z={z}, x={x})")));
        }
        // Time derivative of v_hat at fixed y from neighbouring stored slices.
        let k = crate::interp::locate(&field.t, t);
        let dt = field.t[k + 1] - field.t[k];
        let (t0, t1) = if t - dt >= 0.0 { (t - dt, (t + dt).min(horizon)) } else { (t, t + dt) };
        let vhat_at = |tt: f64, zz: f64| -> Result<f64> {
            let sl = field.slice(tt, zz)?;
            Ok(sl.eval_u(u)?.vhat)
        };
        let vhat_t = (vhat_at(t1, z)? - vhat_at(t0, z)?) / (t1 - t0);
        let vhat_zz = if field.n_z() > 1 {
            let dz = field.meta.dz;
            (vhat_at(t, z + dz)? - 2.0 * p.vhat + vhat_at(t, z - dz)?) / (dz * dz)
        } else {
            0.0
        };
        let model = self.model;
        let dynamics = model.dynamics();
        let alpha = model.alpha();
        let rho = model.rho();
        let phi = model.derived.phi(z);
        let sigma_z = dynamics.vol(z);
        let v = p.vhat + x * y;
        let v_x = y;
        let v_xx = -1.0 / p.vhat_yy;
        let v_xz = -p.vhat_yz / p.vhat_yy;
        let v_zz = vhat_zz + v_xz * v_xz / v_xx;
        let f = model.f(t, z);
        let residual = vhat_t - rho * v - alpha * v_x * v_x / v_xx
            + 0.5 * sigma_z * sigma_z * (v_zz - v_xz * v_xz / v_xx)
            - phi * v_x * v_xz / v_xx
            + dynamics.drift(z) * p.vhat_z
            - f * v_x;
        Ok(HjbResidual { residual, scale: (f * v_x).abs() })
    }

    /// Table of `(x, v, v_x, xi, theta_1..theta_d)` at fixed `(t, z)`.
    pub fn tabulate(&self, t: f64, z: f64, xs: &[f64]) -> Result<CsvTable> {
        let d = self.model.d();
        let mut header = vec!["x".to_string(), "v".into(), "v_x".into(), "xi".into()];
        header.extend((1..=d).map(|i| format!("theta_{i}")));
        let mut table = CsvTable::new(header);
        let s = self.slice(t, z)?;
        for &x in xs {
            check_x(x)?;
            let p = self.point_on_slice(&s, x)?;
            let mut row = vec![x, p.v, p.v_x, p.xi];
            row.extend(p.theta);
            table.push(row);
        }
        Ok(table)
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(RatchetError::InvalidParameter(format!("buffer x = {x} must be finite and >= 0")));
    }
    Ok(())
}

fn ustar(s: &DualSlice, x: f64, growth: f64) -> Result<f64> {
    let xi = growth * s.g_limit();
    if x == 0.0 {
        return Ok(0.0);
    }
    s.invert(x).ok_or(RatchetError::OutOfRegion { x, xi })
}

fn value_on_slice(s: &DualSlice, x: f64, growth: f64) -> Result<f64> {
    match ustar(s, x, growth) {
        Ok(u) => {
            let y = (-u).exp();
            Ok(s.eval_u(u)?.vhat + x * y)
        }
        Err(RatchetError::OutOfRegion { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn outside_theta(model: &Model, s: &DualSlice, growth: f64) -> DVector<f64> {
    let sigma_z = model.dynamics().vol(s.z);
    let xi_z = growth * s.g_z_limit();
    &model.derived.hedge * (sigma_z * xi_z)
}

/// Feedback portfolio tabulated on a `(t, z, r = x / xi)` grid and
/// interpolated multilinearly; for `r >= 1` the outside-region branch is used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyTable {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub d: usize,
    /// `xi[k][j]`.
    pub xi: Vec<f64>,
    /// `theta[k][j][m][c]`, with `m = r.len()` holding the outside branch.
    pub theta: Vec<f64>,
}

impl PolicyTable {
    /// Builds the table from a primal solution.
    pub fn build(solution: &PrimalSolution<'_>, n_t: usize, n_z: usize, n_r: usize) -> Result<Self> {
        use rayon::prelude::*;
        let field = solution.field;
        let horizon = solution.model.horizon;
        let n_t = n_t.max(2);
        let t: Vec<f64> = (0..n_t).map(|k| horizon * k as f64 / (n_t - 1) as f64).collect();
        let z: Vec<f64> = if field.n_z() == 1 {
            vec![field.z[0]]
        } else {
            let n_z = n_z.max(2);
            let (lo, hi) = (field.z[0], field.z[field.n_z() - 1]);
            (0..n_z).map(|j| lo + (hi - lo) * j as f64 / (n_z - 1) as f64).collect()
        };
        let n_r = n_r.max(2);
        // Nodes cluster towards r = 1 where theta changes fastest.
        let r: Vec<f64> = (0..n_r)
            .map(|m| {
                let s = m as f64 / (n_r - 1) as f64;
                1.0 - (1.0 - s) * (1.0 - s)
            })
            .collect();
        let d = solution.model.d();
        let cells: Vec<(f64, Vec<f64>)> = t
            .par_iter()
            .flat_map_iter(|&tk| z.iter().map(move |&zj| (tk, zj)))
            .map(|(tk, zj)| -> Result<(f64, Vec<f64>)> {
                let s = field.slice(tk, zj)?;
                let growth = (solution.model.rho() * tk).exp();
                let xi = growth * s.g_limit();
                let mut out = Vec::with_capacity((n_r + 1) * d);
                for &rm in &r {
                    let x = (rm * xi).min(xi * (1.0 - 1e-9));
                    let p = solution.point_on_slice(&s, x)?;
                    out.extend(p.theta);
                }
                out.extend(outside_theta(solution.model, &s, growth).iter().copied());
                Ok((xi, out))
            })
            .collect::<Result<Vec<_>>>()?;
        let xi = cells.iter().map(|c| c.0).collect();
        let theta = cells.into_iter().flat_map(|c| c.1).collect();
        Ok(PolicyTable { t, z, r, d, xi, theta })
    }

    fn xi_node(&self, k: usize, j: usize) -> f64 {
        self.xi[k * self.z.len() + j]
    }

    fn theta_node(&self, k: usize, j: usize, m: usize) -> &[f64] {
        let stride = (self.r.len() + 1) * self.d;
        let start = (k * self.z.len() + j) * stride + m * self.d;
        &self.theta[start..start + self.d]
    }

    /// Interpolated `xi(t, z)`.
    pub fn xi(&self, t: f64, z: f64) -> f64 {
        let (k, wt) = bracket(&self.t, t);
        let k1 = (k + 1).min(self.t.len() - 1);
        let (j, wz) = bracket(&self.z, z);
        let j1 = (j + 1).min(self.z.len() - 1);
        let a = (1.0 - wz) * self.xi_node(k, j) + wz * self.xi_node(k, j1);
        let b = (1.0 - wz) * self.xi_node(k1, j) + wz * self.xi_node(k1, j1);
        (1.0 - wt) * a + wt * b
    }

    /// Interpolated portfolio at `(t, z, x)`, written into `out`.
    pub fn theta_into(&self, t: f64, z: f64, x: f64, out: &mut [f64]) {
        let (k, wt) = bracket(&self.t, t);
        let k1 = (k + 1).min(self.t.len() - 1);
        let (j, wz) = bracket(&self.z, z);
        let j1 = (j + 1).min(self.z.len() - 1);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (kk, w1) in [(k, 1.0 - wt), (k1, wt)] {
            for (jj, w2) in [(j, 1.0 - wz), (j1, wz)] {
                let w = w1 * w2;
                if w == 0.0 {
                    continue;
                }
                let xi = self.xi_node(kk, jj);
                let ratio = if xi > 0.0 { x.max(0.0) / xi } else { f64::INFINITY };
                if ratio >= 1.0 {
                    let th = self.theta_node(kk, jj, self.r.len());
                    for c in 0..self.d {
                        out[c] += w * th[c];
                    }
                } else {
                    let (m, wr) = bracket(&self.r, ratio);
                    let a = self.theta_node(kk, jj, m);
                    let b = self.theta_node(kk, jj, m + 1);
                    for c in 0..self.d {
                        out[c] += w * ((1.0 - wr) * a[c] + wr * b[c]);
                    }
                }
            }
        }
    }

    pub fn theta(&self, t: f64, z: f64, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.theta_into(t, z, x, &mut out);
        out
    }
}
