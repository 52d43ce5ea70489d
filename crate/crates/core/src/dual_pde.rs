//! Finite-difference solution of the dual Neumann problem
//!
//! `h_t + alpha h_uu + (alpha - rho) h_u + phi(z) h_uz + mu_Z h_z + sigma_Z^2/2 h_zz = f(t,z) e^{-u - rho t}`
//! with `h(T) = 0` and `h_u(t,z,0) = 0`.
//!
//! The solver works with `H = e^{u} h`, which stays bounded as `u` grows:
//!
//! `H_t + alpha H_uu - (alpha + rho) H_u + rho H + phi H_uz + (mu_Z - phi) H_z + sigma_Z^2/2 H_zz = f e^{-rho t}`,
//!
//! with `H_u = H` at `u = 0` and `H_u = 0` at the truncation `u_max`, the
//! latter being the exact far-field behaviour `h ~ -e^{-u} k(t,z)`. Time is
//! marched backwards with a Douglas ADI splitting: implicit line solves in
//! `u` and in `z`, the mixed derivative explicit.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::interp::{bracket, Pchip};
use crate::model::{FactorCoefficients, Model, SampleDomain};
use crate::quad::gauss_legendre5;

const MAGIC: &[u8; 8] = b"RATCHETF";

/// Grid and scheme settings; `None` fields are chosen from the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdeConfig {
    pub n_u: usize,
    pub n_z: usize,
    #[serde(default)]
    pub u_max: Option<f64>,
    #[serde(default)]
    pub z_range: Option<(f64, f64)>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Implicitness of the ADI line solves (1 = backward Euler, 1/2 = Crank-Nicolson type).
    pub theta: f64,
    /// Number of stored time slices, including both ends.
    pub max_slices: usize,
    /// Upper bound on `dt max|phi| / (du dz)` for the explicit mixed term.
    pub mixed_cfl_limit: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            n_u: 200,
            n_z: 200,
            u_max: None,
            z_range: None,
            dt: None,
            theta: 1.0,
            max_slices: 201,
            mixed_cfl_limit: 1.0,
        }
    }
}

impl PdeConfig {
    pub fn with_nodes(mut self, n_u: usize, n_z: usize) -> Self {
        self.n_u = n_u;
        self.n_z = n_z;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_u_max(mut self, u_max: f64) -> Self {
        self.u_max = Some(u_max);
        self
    }

    pub fn with_z_range(mut self, lo: f64, hi: f64) -> Self {
        self.z_range = Some((lo, hi));
        self
    }
}

/// Default truncation of the buffer axis.
///
/// Under the measure that makes `H` a plain expectation the reflected
/// process drifts towards the barrier at rate `alpha + rho`, so the
/// truncation has to sit beyond that drift over the horizon.
pub fn default_u_max(alpha: f64, rho: f64, horizon: f64) -> f64 {
    let reach = (alpha + rho) * horizon + 6.0 * (2.0 * alpha * horizon).sqrt() + 2.0;
    reach.max(12.0)
}

/// Metadata stored with a solved field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub scheme: String,
    pub horizon: f64,
    pub alpha: f64,
    pub rho: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub du: f64,
    pub dz: f64,
    pub theta: f64,
    pub mixed_cfl: f64,
}

/// Gridded dual solution.
///
/// `scaled[k][j][i] = H(t_k, z_j, u_i) = e^{u_i} h(t_k, z_j, u_i)`, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualField {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub scaled: Vec<f64>,
    pub meta: FieldMeta,
}

struct Tri {
    lo: Vec<f64>,
    diag: Vec<f64>,
    up: Vec<f64>,
}

impl Tri {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.lo[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.up[i] * x[i + 1];
            }
            out[i] = v;
        }
    }
}

/// Solves `(I - c A) x = rhs` in place by the Thomas algorithm.
fn solve_shifted(a: &Tri, c: f64, rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    let b0 = 1.0 - c * a.diag[0];
    let mut beta = b0;
    if n == 1 {
        rhs[0] /= beta;
        return;
    }
    scratch[0] = -c * a.up[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        let lo = -c * a.lo[i];
        beta = 1.0 - c * a.diag[i] - lo * scratch[i - 1];
        if i + 1 < n {
            scratch[i] = -c * a.up[i] / beta;
        }
        rhs[i] = (rhs[i] - lo * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Convection-diffusion row coefficients `a w'' + b w'` on a uniform grid,
/// central when the cell Peclet number allows it, upwind otherwise.
fn row(a: f64, b: f64, h: f64) -> (f64, f64, f64) {
    let d = a / (h * h);
    if b.abs() * h <= 2.0 * a {
        (d - b / (2.0 * h), -2.0 * d, d + b / (2.0 * h))
    } else if b > 0.0 {
        (d, -2.0 * d - b / h, d + b / h)
    } else {
        (d - b / h, -2.0 * d + b / h, d)
    }
}

fn u_operator(alpha: f64, rho: f64, du: f64, n: usize) -> Tri {
    let mut tri = Tri { lo: vec![0.0; n], diag: vec![0.0; n], up: vec![0.0; n] };
    let c = -(alpha + rho);
    let d = alpha / (du * du);
    tri.diag[0] = -2.0 * d - 2.0 * alpha / du + c + rho;
    if n > 1 {
        tri.up[0] = 2.0 * d;
        for i in 1..n - 1 {
            let (l, m, r) = row(alpha, c, du);
            tri.lo[i] = l;
            tri.diag[i] = m + rho;
            tri.up[i] = r;
        }
        tri.lo[n - 1] = 2.0 * d;
        tri.diag[n - 1] = -2.0 * d + rho;
    }
    tri
}

fn z_operator(model: &Model, z: &[f64]) -> Tri {
    let n = z.len();
    let mut tri = Tri { lo: vec![0.0; n], diag: vec![0.0; n], up: vec![0.0; n] };
    if n == 1 {
        return tri;
    }
    let dz = z[1] - z[0];
    let dyn_ = model.dynamics();
    let b = |x: f64| dyn_.drift(x) - model.derived.phi(x);
    tri.diag[0] = -b(z[0]) / dz;
    tri.up[0] = b(z[0]) / dz;
    for j in 1..n - 1 {
        let a = 0.5 * dyn_.vol(z[j]).powi(2);
        let (l, m, r) = row(a, b(z[j]), dz);
        tri.lo[j] = l;
        tri.diag[j] = m;
        tri.up[j] = r;
    }
    tri.lo[n - 1] = -b(z[n - 1]) / dz;
    tri.diag[n - 1] = b(z[n - 1]) / dz;
    tri
}

fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Mixed term `phi(z) H_uz` at every node, using `H_uz = H_z` on `u = 0`
/// and `H_uz = 0` on `u = u_max`.
fn mixed_term(h: &[f64], phi: &[f64], nu: usize, nz: usize, du: f64, dz: f64, out: &mut [f64]) {
    out.par_chunks_mut(nu).enumerate().for_each(|(j, line)| {
        let (j0, j1) = if j == 0 {
            (0, 1)
        } else if j == nz - 1 {
            (nz - 2, nz - 1)
        } else {
            (j - 1, j + 1)
        };
        let span = (j1 - j0) as f64 * dz;
        let a = &h[j0 * nu..(j0 + 1) * nu];
        let b = &h[j1 * nu..(j1 + 1) * nu];
        line[0] = phi[j] * (b[0] - a[0]) / span;
        for i in 1..nu - 1 {
            let cross = (b[i + 1] - b[i - 1]) - (a[i + 1] - a[i - 1]);
            line[i] = phi[j] * cross / (2.0 * du * span);
        }
        line[nu - 1] = 0.0;
    });
}

/// Solves the dual problem backwards from `h(T) = 0`.
pub fn solve_dual(model: &Model, config: &PdeConfig) -> Result<DualField> {
    let horizon = model.horizon;
    let alpha = model.alpha();
    let rho = model.rho();
    if config.n_u < 3 {
        return Err(RatchetError::InvalidParameter("need at least 3 u-nodes".into()));
    }
    if !(config.theta > 0.0 && config.theta <= 1.0) {
        return Err(RatchetError::InvalidParameter("theta must lie in (0, 1]".into()));
    }
    let u_max = config.u_max.unwrap_or_else(|| default_u_max(alpha, rho, horizon));
    let nu = config.n_u;
    let u = uniform(0.0, u_max, nu);
    let du = u[1] - u[0];

    let factor_free = model.is_factor_free() || model.dynamics().is_frozen();
    let nz = if factor_free { 1 } else { config.n_z.max(3) };
    let (z_lo, z_hi) = match config.z_range {
        Some(r) => r,
        None => {
            let d = SampleDomain::around(&model.factor, horizon);
            (d.z_min, d.z_max)
        }
    };
    if nz > 1 && !(z_hi > z_lo) {
        return Err(RatchetError::InvalidParameter("empty z range".into()));
    }
    let z = if nz == 1 { vec![model.factor.z0] } else { uniform(z_lo, z_hi, nz) };
    let dz = if nz > 1 { z[1] - z[0] } else { 0.0 };

    let dt_target = config.dt.unwrap_or_else(|| 1e-3f64.min(du * du / (4.0 * alpha + 1.0)));
    if !(dt_target > 0.0) {
        return Err(RatchetError::InvalidParameter("dt must be positive".into()));
    }
    let n_steps = ((horizon / dt_target).ceil() as usize).max(1);
    let dt = horizon / n_steps as f64;

    let phi: Vec<f64> = z.iter().map(|&x| model.derived.phi(x)).collect();
    let max_phi = phi.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let mixed_cfl = if nz > 1 { dt * max_phi / (du * dz) } else { 0.0 };
    if mixed_cfl > config.mixed_cfl_limit {
        return Err(RatchetError::Instability {
            step: dt,
            detail: format!("explicit mixed term CFL number {mixed_cfl:.3} exceeds {}", config.mixed_cfl_limit),
        });
    }

    let au = u_operator(alpha, rho, du, nu);
    let az = z_operator(model, &z);
    let th = config.theta;
    let f_max = z.iter().map(|&x| model.f(0.0, x).abs().max(model.f(horizon, x).abs())).fold(0.0, f64::max);
    let bound = 1e3 * (1.0 + f_max) * horizon * (rho * horizon).exp() + 1.0;

    let stride = n_steps.div_ceil(config.max_slices.max(2) - 1).max(1);
    let size = nu * nz;
    let mut cur = vec![0.0; size];
    let mut slices: Vec<(f64, Vec<f64>)> = vec![(horizon, cur.clone())];
    let mut y0 = vec![0.0; size];
    let mut au_h = vec![0.0; size];
    let mut az_h = vec![0.0; size];
    let mut mix = vec![0.0; size];

    for step in 0..n_steps {
        let t_new = horizon - (step + 1) as f64 * dt;
        let t_mid = t_new + 0.5 * dt;
        let disc = (-rho * t_mid).exp();
        let source: Vec<f64> = z.iter().map(|&x| model.f(t_mid, x) * disc).collect();

        au_h.par_chunks_mut(nu).zip(cur.par_chunks(nu)).for_each(|(o, h)| au.apply(h, o));
        if nz > 1 {
            mixed_term(&cur, &phi, nu, nz, du, dz, &mut mix);
            for i in 0..nu {
                let col: Vec<f64> = (0..nz).map(|j| cur[j * nu + i]).collect();
                let mut out = vec![0.0; nz];
                az.apply(&col, &mut out);
                for j in 0..nz {
                    az_h[j * nu + i] = out[j];
                }
            }
        }
        y0.par_chunks_mut(nu).enumerate().for_each(|(j, line)| {
            for i in 0..nu {
                let k = j * nu + i;
                line[i] = cur[k] + dt * (au_h[k] + az_h[k] + mix[k] - source[j]);
            }
        });
        y0.par_chunks_mut(nu).enumerate().for_each(|(j, line)| {
            let mut scratch = vec![0.0; nu];
            for i in 0..nu {
                line[i] -= th * dt * au_h[j * nu + i];
            }
            solve_shifted(&au, th * dt, line, &mut scratch);
        });
        if nz > 1 {
            let cols: Vec<Vec<f64>> = (0..nu)
                .into_par_iter()
                .map(|i| {
                    let mut col: Vec<f64> = (0..nz).map(|j| y0[j * nu + i] - th * dt * az_h[j * nu + i]).collect();
                    let mut scratch = vec![0.0; nz];
                    solve_shifted(&az, th * dt, &mut col, &mut scratch);
                    col
                })
                .collect();
            for (i, col) in cols.iter().enumerate() {
                for j in 0..nz {
                    cur[j * nu + i] = col[j];
                }
            }
        } else {
            cur.copy_from_slice(&y0);
        }

        let worst = cur.iter().fold(0.0_f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if worst > bound {
            return Err(RatchetError::Instability {
                step: dt,
                detail: format!("solution magnitude {worst:.3e} exceeds growth bound {bound:.3e} at t = {t_new:.6}"),
            });
        }
        if (step + 1) % stride == 0 || step + 1 == n_steps {
            let t_store = if step + 1 == n_steps { 0.0 } else { t_new };
            slices.push((t_store, cur.clone()));
        }
    }
    slices.reverse();
    let t: Vec<f64> = slices.iter().map(|s| s.0).collect();
    let mut scaled = Vec::with_capacity(slices.len() * size);
    for (_, s) in &slices {
        scaled.extend_from_slice(s);
    }
    Ok(DualField {
        t,
        z,
        u,
        scaled,
        meta: FieldMeta {
            scheme: "douglas-adi".into(),
            horizon,
            alpha,
            rho,
            dt,
            n_steps,
            du,
            dz,
            theta: th,
            mixed_cfl,
        },
    })
}

/// `v_hat` and its partial derivatives at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VhatPartials {
    pub vhat: f64,
    pub vhat_y: f64,
    pub vhat_yy: f64,
    pub vhat_z: f64,
    pub vhat_yz: f64,
}

/// The field restricted to one `(t, z)`, ready for repeated evaluation in `u` or `y`.
#[derive(Clone, Debug)]
pub struct DualSlice {
    pub t: f64,
    pub z: f64,
    rho: f64,
    u: Vec<f64>,
    scaled: Vec<f64>,
    scaled_z: Vec<f64>,
    g: Pchip,
    g_z: Vec<f64>,
    cumulative: Vec<f64>,
    /// Nodes where the raw `g` data had to be lifted to stay monotone.
    pub monotone_repairs: usize,
}

/// `g = e^{u} h_u = H_u - H` at the nodes, with the boundary identities.
fn g_nodes(h: &[f64], du: f64) -> Vec<f64> {
    let n = h.len();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (h[i + 1] - h[i - 1]) / (2.0 * du) - h[i];
    }
    g[n - 1] = -h[n - 1];
    g
}

impl DualField {
    pub fn n_u(&self) -> usize {
        self.u.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn u_max(&self) -> f64 {
        *self.u.last().expect("non-empty grid")
    }

    /// Smallest `y` covered by the grid.
    pub fn y_floor(&self) -> f64 {
        (-self.u_max()).exp()
    }

    fn line(&self, k: usize, j: usize) -> &[f64] {
        let nu = self.n_u();
        let start = (k * self.n_z() + j) * nu;
        &self.scaled[start..start + nu]
    }

    /// Nodal `H` at slice `k`, z-node `j`, u-node `i`.
    pub fn scaled_at(&self, k: usize, j: usize, i: usize) -> f64 {
        self.line(k, j)[i]
    }

    /// Nodal `h = e^{-u} H`.
    pub fn h_node(&self, k: usize, j: usize, i: usize) -> f64 {
        (-self.u[i]).exp() * self.scaled_at(k, j, i)
    }

    fn check_point(&self, t: f64, z: f64) -> Result<()> {
        let horizon = self.meta.horizon;
        if !(t >= -1e-12 && t <= horizon + 1e-12) {
            return Err(RatchetError::OutOfDomain(format!("t = {t} outside [0, {horizon}]")));
        }
        if self.n_z() > 1 {
            let (lo, hi) = (self.z[0], self.z[self.n_z() - 1]);
            let tol = 1e-12 * (hi - lo);
            if !(z >= lo - tol && z <= hi + tol) {
                return Err(RatchetError::OutOfDomain(format!("z = {z} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// `H` and `H_z` lines at `(t, z)`, bilinear in `(t, z)`.
    fn lines_at(&self, t: f64, z: f64) -> (Vec<f64>, Vec<f64>) {
        let nu = self.n_u();
        let (k, wt) = bracket(&self.t, t);
        let k1 = (k + 1).min(self.t.len() - 1);
        let mut h = vec![0.0; nu];
        let mut hz = vec![0.0; nu];
        if self.n_z() == 1 {
            for i in 0..nu {
                h[i] = (1.0 - wt) * self.line(k, 0)[i] + wt * self.line(k1, 0)[i];
            }
            return (h, hz);
        }
        let (j, wz) = bracket(&self.z, z);
        let dz = self.z[j + 1] - self.z[j];
        for i in 0..nu {
            let a0 = (1.0 - wt) * self.line(k, j)[i] + wt * self.line(k1, j)[i];
            let a1 = (1.0 - wt) * self.line(k, j + 1)[i] + wt * self.line(k1, j + 1)[i];
            h[i] = (1.0 - wz) * a0 + wz * a1;
            hz[i] = (a1 - a0) / dz;
        }
        (h, hz)
    }

    /// Restricts the field to `(t, z)`.
    pub fn slice(&self, t: f64, z: f64) -> Result<DualSlice> {
        self.check_point(t, z)?;
        let (h, hz) = self.lines_at(t, z);
        let du = self.meta.du;
        let raw = g_nodes(&h, du);
        let mut g = raw.clone();
        let mut repairs = 0;
        for i in 1..g.len() {
            if g[i] < g[i - 1] {
                g[i] = g[i - 1];
                repairs += 1;
            }
        }
        let g_z = g_nodes(&hz, du);
        let pchip = Pchip::new(self.u.clone(), g);
        let mut cumulative = vec![0.0; self.u.len()];
        for i in 1..self.u.len() {
            let seg = gauss_legendre5(|s| pchip.value(s) * (-s).exp(), self.u[i - 1], self.u[i]);
            cumulative[i] = cumulative[i - 1] + seg;
        }
        Ok(DualSlice {
            t,
            z,
            rho: self.meta.rho,
            u: self.u.clone(),
            scaled: h,
            scaled_z: hz,
            g: pchip,
            g_z,
            cumulative,
            monotone_repairs: repairs,
        })
    }

    /// `h(t, z, u)`.
    pub fn h(&self, t: f64, z: f64, u: f64) -> Result<f64> {
        self.slice(t, z)?.h(u)
    }

    /// `v_hat` and partials at `(t, z, y)`, `y` in `[y_floor, 1]`.
    pub fn vhat_eval(&self, t: f64, z: f64, y: f64) -> Result<VhatPartials> {
        self.slice(t, z)?.eval_y(y)
    }

    /// Superhedging threshold read from the grid: `-v_hat_y` at the floor `y`.
    ///
    /// `H_u = 0` at `u_max`, so `e^{u} h_u` is flat there and the floor value
    /// is already the limit.
    pub fn xi(&self, t: f64, z: f64) -> Result<f64> {
        self.check_point(t, z)?;
        let (h, _) = self.lines_at(t, z);
        Ok((self.meta.rho * t).exp() * (-h[h.len() - 1]))
    }

    /// `d xi / dz` from the grid.
    pub fn xi_z(&self, t: f64, z: f64) -> Result<f64> {
        self.check_point(t, z)?;
        let (_, hz) = self.lines_at(t, z);
        Ok((self.meta.rho * t).exp() * (-hz[hz.len() - 1]))
    }

    /// Largest `|h_u(t_k, z_j, 0)|` measured with a one-sided second-order
    /// difference, independent of the ghost node the scheme uses; `O(du^2)`.
    pub fn neumann_defect(&self) -> f64 {
        let du = self.meta.du;
        let mut worst = 0.0_f64;
        for k in 0..self.t.len() {
            for j in 0..self.n_z() {
                let l = self.line(k, j);
                // Second-order one-sided H_u at u = 0 compared with H(0).
                let hu = (-3.0 * l[0] + 4.0 * l[1] - l[2]) / (2.0 * du);
                worst = worst.max((hu - l[0]).abs());
            }
        }
        worst
    }

    /// Writes the field as `RATCHETF`, a little-endian `u64` header length,
    /// a JSON header and the `f64` values in little-endian order.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "t": self.t,
            "z": self.z,
            "u": self.u,
            "meta": self.meta,
            "layout": "scaled[t][z][u] = e^u h",
        });
        let bytes = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&(bytes.len() as u64).to_le_bytes())?;
        out.write_all(&bytes)?;
        for v in &self.scaled {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(RatchetError::InvalidParameter("not a dual field file".into()));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        #[derive(Deserialize)]
        struct Header {
            t: Vec<f64>,
            z: Vec<f64>,
            u: Vec<f64>,
            meta: FieldMeta,
        }
        let head: Header = serde_json::from_slice(&header)?;
        let count = head.t.len() * head.z.len() * head.u.len();
        let mut raw = vec![0u8; count * 8];
        input.read_exact(&mut raw)?;
        let scaled = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(DualField { t: head.t, z: head.z, u: head.u, scaled, meta: head.meta })
    }
}

impl DualSlice {
    pub fn u_max(&self) -> f64 {
        self.u[self.u.len() - 1]
    }

    fn check_u(&self, u: f64) -> Result<()> {
        if !(u >= 0.0 && u <= self.u_max() * (1.0 + 1e-12)) {
            return Err(RatchetError::OutOfDomain(format!("u = {u} outside [0, {}]", self.u_max())));
        }
        Ok(())
    }

    /// `g(u) = e^{u} h_u` and its derivative.
    pub fn g(&self, u: f64) -> (f64, f64) {
        self.g.eval(u.clamp(0.0, self.u_max()))
    }

    /// Value of `g` at the truncation, `e^{-rho t} xi`.
    pub fn g_limit(&self) -> f64 {
        self.g.values()[self.u.len() - 1]
    }

    /// `g_z` at the truncation, `e^{-rho t} xi_z`.
    pub fn g_z_limit(&self) -> f64 {
        self.g_z[self.g_z.len() - 1]
    }

    /// `h(u) = h(u_max) - int_u^{u_max} g(s) e^{-s} ds`, anchored at the far end
    /// so that small values at large `u` keep their relative accuracy.
    pub fn h(&self, u: f64) -> Result<f64> {
        self.check_u(u)?;
        let n = self.u.len();
        let i = crate::interp::locate(&self.u, u);
        let part = gauss_legendre5(|s| self.g.value(s) * (-s).exp(), self.u[i], u);
        let tail = self.cumulative[n - 1] - self.cumulative[i] - part;
        Ok((-self.u[n - 1]).exp() * self.scaled[n - 1] - tail)
    }

    /// Partials in the buffer coordinate `u = -ln y`.
    pub fn eval_u(&self, u: f64) -> Result<VhatPartials> {
        let h = self.h(u)?;
        let growth = (self.rho * self.t).exp();
        let y = (-u).exp();
        let (g, g_u) = self.g(u);
        let hz = crate::interp::linear(&self.u, &self.scaled_z, u);
        let gz = crate::interp::linear(&self.u, &self.g_z, u);
        Ok(VhatPartials {
            vhat: growth * h,
            vhat_y: -growth * g,
            vhat_yy: growth * g_u / y,
            vhat_z: growth * y * hz,
            vhat_yz: -growth * gz,
        })
    }

    pub fn eval_y(&self, y: f64) -> Result<VhatPartials> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(RatchetError::OutOfDomain(format!("y = {y} outside (0, 1]")));
        }
        self.eval_u(-y.ln())
    }

    /// Solves `e^{rho t} g(u) = x` for `u`; `None` when `x` is at or beyond the
    /// grid threshold.
    pub fn invert(&self, x: f64) -> Option<f64> {
        let target = x * (-self.rho * self.t).exp();
        let values = self.g.values();
        let n = values.len();
        if target <= 0.0 {
            return Some(0.0);
        }
        if target >= values[n - 1] {
            return None;
        }
        let mut i = 0;
        while i + 1 < n && values[i + 1] <= target {
            i += 1;
        }
        let (mut lo, mut hi) = (self.u[i], self.u[(i + 1).min(n - 1)]);
        while hi - lo > 1e-6 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if self.g.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut u = 0.5 * (lo + hi);
        for _ in 0..2 {
            let (v, d) = self.g.eval(u);
            if d > 0.0 {
                let next = u - (v - target) / d;
                if next >= lo - 1e-6 && next <= hi + 1e-6 {
                    u = next;
                }
            }
        }
        Some(u.clamp(0.0, self.u_max()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenchmarkSpec, FactorDynamics, FactorSpec, GrowthRate, MarketParams};

    fn constant_model(mu: f64, rho: f64, c: f64) -> Model {
        Model::new(
            MarketParams::one_dim(mu, 1.0, rho, Some(1.0)),
            FactorSpec { dynamics: FactorDynamics::Constant { drift: 0.0, vol: 0.0 }, gamma: vec![1.0], z0: 0.0 },
            BenchmarkSpec { rate: GrowthRate::Constant { c }, a: 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn thomas_solves_shifted_system() {
        let a = Tri { lo: vec![0.0, 1.0, 2.0], diag: vec![-2.0, -3.0, -1.0], up: vec![1.0, 0.5, 0.0] };
        let x = [1.0, -2.0, 0.5];
        let mut ax = [0.0; 3];
        a.apply(&x, &mut ax);
        let c = 0.3;
        let mut rhs: Vec<f64> = (0..3).map(|i| x[i] - c * ax[i]).collect();
        let mut s = vec![0.0; 3];
        solve_shifted(&a, c, &mut rhs, &mut s);
        for i in 0..3 {
            assert!((rhs[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn no_noise_gives_reflected_transport() {
        // alpha = 0: R_s = (u - rho (s - t))^+, so h = -c int_t^T e^{-rho s} e^{-(u - rho(s-t))^+} ds.
        let m = constant_model(0.0, 1.0, 2.0);
        let field = solve_dual(&m, &PdeConfig::default().with_nodes(600, 1).with_u_max(6.0).with_dt(1e-3)).unwrap();
        for &(t, u) in &[(0.0, 0.0), (0.5, 0.3), (0.2, 2.0)] {
            let h = field.h(t, 0.0, u).unwrap();
            let g = |s: f64| (-s).exp() * (-(u - (s - t)).max(0.0)).exp();
            let exact = -2.0 * crate::quad::integrate(g, t, 1.0, 1e-12, 1e-12).value;
            assert!((h - exact).abs() < 1e-2 * exact.abs(), "{h} {exact}");
        }
    }

    #[test]
    fn terminal_slice_is_zero_and_h_negative() {
        let m = constant_model(0.5, 0.1, 1.0);
        let field = solve_dual(&m, &PdeConfig::default().with_nodes(200, 1)).unwrap();
        let last = field.t.len() - 1;
        assert_eq!(field.t[last], 1.0);
        for i in 0..field.n_u() {
            assert_eq!(field.scaled_at(last, 0, i), 0.0);
            assert!(field.scaled_at(0, 0, i) < 0.0);
        }
        let du = field.meta.du;
        assert!(field.neumann_defect() < 5.0 * du * du, "{}", field.neumann_defect());
    }

    #[test]
    fn slice_derivatives_are_consistent() {
        let m = constant_model(0.5, 0.1, 1.0);
        let field = solve_dual(&m, &PdeConfig::default().with_nodes(120, 1)).unwrap();
        let s = field.slice(0.2, 0.0).unwrap();
        let y = 0.4;
        let p = s.eval_y(y).unwrap();
        let e = 1e-5;
        let up = s.eval_y(y + e).unwrap();
        let dn = s.eval_y(y - e).unwrap();
        assert!(((up.vhat - dn.vhat) / (2.0 * e) - p.vhat_y).abs() < 1e-7);
        assert!(((up.vhat_y - dn.vhat_y) / (2.0 * e) - p.vhat_yy).abs() < 1e-3 * p.vhat_yy.abs());
        assert!(s.eval_y(1.0).unwrap().vhat_y.abs() < 1e-12);
        let x = 0.3 * field.xi(0.2, 0.0).unwrap();
        let u = s.invert(x).unwrap();
        assert!((s.eval_u(u).unwrap().vhat_y + x).abs() < 1e-9 * (1.0 + x));
    }

    #[test]
    fn save_load_round_trip() {
        let m = constant_model(0.5, 0.1, 1.0);
        let field = solve_dual(&m, &PdeConfig::default().with_nodes(20, 1).with_dt(0.05)).unwrap();
        let mut buf = Vec::new();
        field.save(&mut buf).unwrap();
        let back = DualField::load(buf.as_slice()).unwrap();
        assert_eq!(back, field);
    }
}
