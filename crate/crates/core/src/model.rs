//! Market, factor and benchmark specifications, the scalar quantities derived
//! from them, and the assumption checks run before any solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};

/// Largest accepted condition number of the volatility matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Discount-tail level defining the truncation horizon of infinite-horizon runs.
pub const TAIL_LEVEL: f64 = 1e-8;

/// Constant-coefficient market: drift vector, volatility matrix, discount rate
/// and an optional finite horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: Vec<f64>,
    /// Row-major volatility matrix, `sigma[i][j]` loads asset `i` on noise `j`.
    pub sigma: Vec<Vec<f64>>,
    pub rho: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl MarketParams {
    pub fn one_dim(mu: f64, sigma: f64, rho: f64, horizon: Option<f64>) -> Self {
        MarketParams { mu: vec![mu], sigma: vec![vec![sigma]], rho, horizon }
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn mu_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu)
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        DMatrix::from_fn(d, d, |i, j| self.sigma[i][j])
    }

    /// Checks shapes, signs and invertibility of the volatility matrix.
    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(RatchetError::InvalidParameter("empty drift vector".into()));
        }
        if self.sigma.len() != d || self.sigma.iter().any(|r| r.len() != d) {
            return Err(RatchetError::InvalidParameter(format!(
                "volatility matrix must be {d}x{d}"
            )));
        }
        let finite = self.mu.iter().chain(self.sigma.iter().flatten()).all(|v| v.is_finite());
        if !finite || !self.rho.is_finite() {
            return Err(RatchetError::InvalidParameter("non-finite market parameter".into()));
        }
        if self.rho < 0.0 {
            return Err(RatchetError::InvalidParameter(format!("discount rate {} < 0", self.rho)));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(RatchetError::InvalidParameter(format!("horizon {t} must be > 0")));
            }
        }
        let condition = condition_number(&self.sigma_matrix());
        if !(condition.is_finite() && condition <= MAX_CONDITION) {
            return Err(RatchetError::SingularVolatility { condition });
        }
        Ok(())
    }

    /// Finite horizon, or the truncation horizon `T_eff` with `e^{-rho T_eff} < 1e-8`.
    pub fn effective_horizon(&self) -> Result<f64> {
        match self.horizon {
            Some(t) => Ok(t),
            None => truncation_horizon(self.rho),
        }
    }
}

/// Smallest integer horizon whose discount factor falls below [`TAIL_LEVEL`].
pub fn truncation_horizon(rho: f64) -> Result<f64> {
    if rho <= 0.0 {
        return Err(RatchetError::Unsupported(
            "infinite horizon requires a positive discount rate".into(),
        ));
    }
    let t = (-TAIL_LEVEL.ln() / rho).ceil();
    Ok(if (-rho * t).exp() < TAIL_LEVEL { t } else { t + 1.0 })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Coefficients of a scalar factor diffusion `dZ = mu_Z(Z) dt + sigma_Z(Z) dW^gamma`.
///
/// Extension point for further families; the crate ships [`FactorDynamics`].
pub trait FactorCoefficients {
    fn drift(&self, z: f64) -> f64;
    fn drift_dz(&self, z: f64) -> f64;
    fn vol(&self, z: f64) -> f64;
    fn vol_dz(&self, z: f64) -> f64;
}

/// Built-in factor families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorDynamics {
    /// Arithmetic Brownian motion with constant drift and volatility.
    Constant { drift: f64, vol: f64 },
    /// Mean reversion `kappa (mean - z)` with constant volatility `eta`.
    OrnsteinUhlenbeck { kappa: f64, mean: f64, eta: f64 },
    /// Linear coefficients `growth z` and `vol z`.
    Geometric { growth: f64, vol: f64 },
}

impl FactorCoefficients for FactorDynamics {
    fn drift(&self, z: f64) -> f64 {
        match *self {
            FactorDynamics::Constant { drift, .. } => drift,
            FactorDynamics::OrnsteinUhlenbeck { kappa, mean, .. } => kappa * (mean - z),
            FactorDynamics::Geometric { growth, .. } => growth * z,
        }
    }

    fn drift_dz(&self, _z: f64) -> f64 {
        match *self {
            FactorDynamics::Constant { .. } => 0.0,
            FactorDynamics::OrnsteinUhlenbeck { kappa, .. } => -kappa,
            FactorDynamics::Geometric { growth, .. } => growth,
        }
    }

    fn vol(&self, z: f64) -> f64 {
        match *self {
            FactorDynamics::Constant { vol, .. } => vol,
            FactorDynamics::OrnsteinUhlenbeck { eta, .. } => eta,
            FactorDynamics::Geometric { vol, .. } => vol * z,
        }
    }

    fn vol_dz(&self, _z: f64) -> f64 {
        match *self {
            FactorDynamics::Constant { .. } | FactorDynamics::OrnsteinUhlenbeck { .. } => 0.0,
            FactorDynamics::Geometric { vol, .. } => vol,
        }
    }
}

impl FactorDynamics {
    /// True when the factor never moves (zero drift and zero volatility).
    pub fn is_frozen(&self) -> bool {
        matches!(*self, FactorDynamics::Constant { drift, vol } if drift == 0.0 && vol == 0.0)
            || matches!(*self, FactorDynamics::Geometric { growth, vol } if growth == 0.0 && vol == 0.0)
    }

    pub fn is_positive_preserving(&self) -> bool {
        matches!(self, FactorDynamics::Geometric { .. })
    }
}

/// Factor specification: dynamics, correlation weights and initial value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub dynamics: FactorDynamics,
    /// Weights of `W^gamma = gamma' W`; unit Euclidean norm.
    pub gamma: Vec<f64>,
    pub z0: f64,
}

impl FactorSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.gamma.len() != d {
            return Err(RatchetError::InvalidParameter(format!(
                "gamma has length {}, expected {d}",
                self.gamma.len()
            )));
        }
        if let Some(g) = self.gamma.iter().find(|g| !(g.abs() <= 1.0)) {
            return Err(RatchetError::InvalidParameter(format!("gamma component {g} outside [-1,1]")));
        }
        let norm = self.gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(RatchetError::InvalidParameter(format!(
                "gamma must have unit norm so that W^gamma is a Brownian motion (norm {norm})"
            )));
        }
        if !self.z0.is_finite() {
            return Err(RatchetError::InvalidParameter("non-finite z0".into()));
        }
        match self.dynamics {
            FactorDynamics::Geometric { growth, vol } => {
                if self.z0 <= 0.0 {
                    return Err(RatchetError::InvalidParameter(
                        "geometric factor requires z0 > 0".into(),
                    ));
                }
                if !(growth.is_finite() && vol.is_finite()) {
                    return Err(RatchetError::InvalidParameter("non-finite factor coefficient".into()));
                }
            }
            FactorDynamics::OrnsteinUhlenbeck { kappa, mean, eta } => {
                if !(kappa.is_finite() && mean.is_finite() && eta.is_finite()) || kappa < 0.0 {
                    return Err(RatchetError::InvalidParameter(
                        "OU factor requires finite kappa >= 0, mean and eta".into(),
                    ));
                }
            }
            FactorDynamics::Constant { drift, vol } => {
                if !(drift.is_finite() && vol.is_finite()) {
                    return Err(RatchetError::InvalidParameter("non-finite factor coefficient".into()));
                }
            }
        }
        Ok(())
    }
}

/// Benchmark growth rate `f(t, z)` together with its factor derivative.
///
/// Extension point for further families; the crate ships [`GrowthRate`].
pub trait GrowthFunction {
    fn rate(&self, t: f64, z: f64) -> f64;
    fn rate_dz(&self, t: f64, z: f64) -> f64;
}

/// Built-in growth-rate families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthRate {
    Constant { c: f64 },
    /// `f(t, z) = lambda z`, meaningful for a positive factor.
    Linear { lambda: f64 },
    /// `f(t, z) = c1 + c2 / (1 + e^{-beta z})`.
    Logistic { c1: f64, c2: f64, beta: f64 },
}

impl GrowthFunction for GrowthRate {
    fn rate(&self, _t: f64, z: f64) -> f64 {
        match *self {
            GrowthRate::Constant { c } => c,
            GrowthRate::Linear { lambda } => lambda * z,
            GrowthRate::Logistic { c1, c2, beta } => c1 + c2 / (1.0 + (-beta * z).exp()),
        }
    }

    fn rate_dz(&self, _t: f64, z: f64) -> f64 {
        match *self {
            GrowthRate::Constant { .. } => 0.0,
            GrowthRate::Linear { lambda } => lambda,
            GrowthRate::Logistic { c2, beta, .. } => {
                let e = (-beta * z).exp();
                if e.is_infinite() {
                    0.0
                } else {
                    c2 * beta * e / ((1.0 + e) * (1.0 + e))
                }
            }
        }
    }
}

impl GrowthRate {
    /// True when the rate does not depend on the factor.
    pub fn is_factor_free(&self) -> bool {
        matches!(self, GrowthRate::Constant { .. })
            || matches!(*self, GrowthRate::Linear { lambda } if lambda == 0.0)
            || matches!(*self, GrowthRate::Logistic { c2, beta, .. } if c2 == 0.0 || beta == 0.0)
    }
}

/// Ratcheting benchmark `A_t = a + int_0^t f(s, Z_s) ds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub rate: GrowthRate,
    #[serde(default)]
    pub a: f64,
}

/// Geometric index `dI/I = mu_I dt + sigma_I dW^gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmIndexSpec {
    pub mu_i: f64,
    pub sigma_i: f64,
    pub z0: f64,
    pub gamma: Vec<f64>,
}

impl GbmIndexSpec {
    /// Return mismatch `lambda = mu_I - sigma_I gamma' sigma^{-1} mu`.
    pub fn lambda(&self, market: &MarketParams) -> Result<f64> {
        market.validate()?;
        let inv = market
            .sigma_matrix()
            .try_inverse()
            .ok_or(RatchetError::SingularVolatility { condition: f64::INFINITY })?;
        let theta = inv * market.mu_vector();
        let g = DVector::from_column_slice(&self.gamma);
        Ok(self.mu_i - self.sigma_i * g.dot(&theta))
    }

    pub fn validate(&self, market: &MarketParams) -> Result<()> {
        if self.sigma_i < 0.0 || !self.sigma_i.is_finite() || !self.mu_i.is_finite() {
            return Err(RatchetError::InvalidParameter("index needs finite mu_I and sigma_I >= 0".into()));
        }
        if self.z0 <= 0.0 {
            return Err(RatchetError::InvalidParameter("index level z0 must be positive".into()));
        }
        self.factor().validate(market.d())?;
        if self.lambda(market)? == 0.0 {
            return Err(RatchetError::InvalidParameter("return mismatch lambda must be non-zero".into()));
        }
        Ok(())
    }

    /// The index as a geometric factor.
    pub fn factor(&self) -> FactorSpec {
        FactorSpec {
            dynamics: FactorDynamics::Geometric { growth: self.mu_i, vol: self.sigma_i },
            gamma: self.gamma.clone(),
            z0: self.z0,
        }
    }

    /// The equivalent ratcheting benchmark `A_t = a + int lambda I_s ds`.
    pub fn benchmark(&self, market: &MarketParams, a: f64) -> Result<BenchmarkSpec> {
        Ok(BenchmarkSpec { rate: GrowthRate::Linear { lambda: self.lambda(market)? }, a })
    }
}

/// Scalars and vectors derived from the market and the factor weights.
#[derive(Clone, Debug, Serialize)]
pub struct DerivedMarket {
    /// `alpha = mu' (sigma sigma')^{-1} mu / 2`.
    pub alpha: f64,
    /// Correlation between the dual driver `B^1` and `W^gamma`.
    pub varrho: f64,
    /// `alpha - rho`.
    pub mu_tilde: f64,
    pub rho: f64,
    /// `mu' (sigma sigma')^{-1} sigma gamma`, so that `phi(z) = sigma_Z(z) * phi_coeff`.
    pub phi_coeff: f64,
    /// Market price of risk `sigma^{-1} mu`.
    pub price_of_risk: DVector<f64>,
    /// `(sigma sigma')^{-1} mu`.
    pub merton: DVector<f64>,
    /// `(sigma sigma')^{-1} sigma gamma`.
    pub hedge: DVector<f64>,
    /// `sigma^{-T} gamma`.
    pub index_shift: DVector<f64>,
    /// Unit direction of `B^1` in the asset noise; `None` when `mu = 0`.
    pub b1_direction: Option<DVector<f64>>,
    /// Unit direction of `B^2`; `None` when `|varrho| = 1`.
    pub b2_direction: Option<DVector<f64>>,
    /// `mu = 0`: `B^1` is an independent Brownian motion.
    pub zero_drift: bool,
    #[serde(skip)]
    factor: FactorDynamics,
}

impl DerivedMarket {
    /// Cross-term coefficient `phi(z) = sigma_Z(z) mu' (sigma sigma')^{-1} sigma gamma`.
    pub fn phi(&self, z: f64) -> f64 {
        self.factor.vol(z) * self.phi_coeff
    }

    pub fn factor(&self) -> &FactorDynamics {
        &self.factor
    }

    /// `sqrt(1 - varrho^2)`, clamped at zero.
    pub fn varrho_complement(&self) -> f64 {
        (1.0 - self.varrho * self.varrho).max(0.0).sqrt()
    }
}

/// Computes `alpha` as `|sigma^{-1} mu|^2 / 2` and as the quadratic form in
/// `(sigma sigma')^{-1}`.
pub fn alpha_two_ways(market: &MarketParams) -> Result<(f64, f64)> {
    market.validate()?;
    let s = market.sigma_matrix();
    let mu = market.mu_vector();
    let inv = s.clone().try_inverse().ok_or(RatchetError::SingularVolatility { condition: f64::INFINITY })?;
    let k = &inv * &mu;
    let cov_inv = (&s * s.transpose())
        .try_inverse()
        .ok_or(RatchetError::SingularVolatility { condition: f64::INFINITY })?;
    Ok((0.5 * k.norm_squared(), 0.5 * mu.dot(&(cov_inv * &mu))))
}

/// Derives `alpha`, `varrho`, `mu_tilde` and the portfolio vectors.
pub fn derive_market(params: &MarketParams, factor: &FactorSpec) -> Result<DerivedMarket> {
    params.validate()?;
    factor.validate(params.d())?;
    let s = params.sigma_matrix();
    let mu = params.mu_vector();
    let gamma = DVector::from_column_slice(&factor.gamma);
    let singular = || RatchetError::SingularVolatility { condition: condition_number(&s) };
    let inv = s.clone().try_inverse().ok_or_else(singular)?;
    let cov_inv = (&s * s.transpose()).try_inverse().ok_or_else(singular)?;

    let price_of_risk = &inv * &mu;
    let norm = price_of_risk.norm();
    let alpha = 0.5 * norm * norm;
    let zero_drift = norm == 0.0;
    let (varrho, b1_direction) = if zero_drift {
        (0.0, None)
    } else {
        let e1 = &price_of_risk / norm;
        (e1.dot(&gamma).clamp(-1.0, 1.0), Some(e1))
    };
    let comp = (1.0 - varrho * varrho).max(0.0).sqrt();
    let b2_direction = match &b1_direction {
        Some(e1) if comp > 1e-12 => Some((&gamma - e1 * varrho) / comp),
        Some(_) => None,
        None => Some(gamma.clone()),
    };
    let hedge = &cov_inv * (&s * &gamma);
    let index_shift = inv.transpose() * &gamma;
    let phi_coeff = mu.dot(&hedge);
    let derived = DerivedMarket {
        alpha,
        varrho,
        mu_tilde: alpha - params.rho,
        rho: params.rho,
        phi_coeff,
        merton: &cov_inv * &mu,
        hedge,
        index_shift,
        price_of_risk,
        b1_direction,
        b2_direction,
        zero_drift,
        factor: factor.dynamics,
    };
    let finite = [derived.alpha, derived.varrho, derived.phi_coeff].iter().all(|v| v.is_finite());
    if !finite {
        return Err(RatchetError::InvalidParameter("derived market quantities are not finite".into()));
    }
    Ok(derived)
}

/// A validated model: market, factor, benchmark and the derived quantities.
#[derive(Clone, Debug)]
pub struct Model {
    pub market: MarketParams,
    pub factor: FactorSpec,
    pub benchmark: BenchmarkSpec,
    pub derived: DerivedMarket,
    /// Horizon used by the solvers (finite `T` or the truncation horizon).
    pub horizon: f64,
}

impl Model {
    pub fn new(market: MarketParams, factor: FactorSpec, benchmark: BenchmarkSpec) -> Result<Self> {
        let derived = derive_market(&market, &factor)?;
        let horizon = market.effective_horizon()?;
        if !(benchmark.a >= 0.0) {
            return Err(RatchetError::InvalidParameter("benchmark level a must be >= 0".into()));
        }
        Ok(Model { market, factor, benchmark, derived, horizon })
    }

    /// Model of a geometric index tracked through its ratchet reformulation.
    pub fn from_index(market: MarketParams, index: &GbmIndexSpec, a: f64) -> Result<Self> {
        index.validate(&market)?;
        let benchmark = index.benchmark(&market, a)?;
        Model::new(market, index.factor(), benchmark)
    }

    /// Same model with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut market = self.market.clone();
        market.horizon = Some(horizon);
        Model::new(market, self.factor.clone(), self.benchmark.clone())
    }

    pub fn f(&self, t: f64, z: f64) -> f64 {
        self.benchmark.rate.rate(t, z)
    }

    pub fn f_z(&self, t: f64, z: f64) -> f64 {
        self.benchmark.rate.rate_dz(t, z)
    }

    pub fn dynamics(&self) -> &FactorDynamics {
        &self.factor.dynamics
    }

    pub fn alpha(&self) -> f64 {
        self.derived.alpha
    }

    pub fn rho(&self) -> f64 {
        self.market.rho
    }

    pub fn d(&self) -> usize {
        self.market.d()
    }

    /// True when the dual solution does not depend on the factor value.
    pub fn is_factor_free(&self) -> bool {
        self.benchmark.rate.is_factor_free()
    }
}

/// Rectangular `(t, z)` sample domain for assumption checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDomain {
    pub t0: f64,
    pub t1: f64,
    pub nt: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl SampleDomain {
    /// Default domain around `z0`, positive for geometric factors.
    pub fn around(factor: &FactorSpec, horizon: f64) -> Self {
        let (z_min, z_max) = match factor.dynamics {
            FactorDynamics::Geometric { .. } => (factor.z0 / 8.0, factor.z0 * 8.0),
            FactorDynamics::OrnsteinUhlenbeck { kappa, mean, eta } => {
                let sd = if kappa > 0.0 { eta / (2.0 * kappa).sqrt() } else { eta * horizon.sqrt() };
                let lo = (mean - 6.0 * sd).min(factor.z0 - 1.0);
                let hi = (mean + 6.0 * sd).max(factor.z0 + 1.0);
                (lo, hi)
            }
            FactorDynamics::Constant { drift, vol } => {
                let spread = drift.abs() * horizon + 6.0 * vol.abs() * horizon.sqrt() + 1.0;
                (factor.z0 - spread, factor.z0 + spread)
            }
        };
        SampleDomain { t0: 0.0, t1: horizon, nt: 11, z_min, z_max, nz: 41 }
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let nt = self.nt.max(1);
        let nz = self.nz.max(1);
        (0..nt).flat_map(move |i| {
            let t = if nt == 1 { self.t0 } else { self.t0 + (self.t1 - self.t0) * i as f64 / (nt - 1) as f64 };
            (0..nz).map(move |j| {
                let z = if nz == 1 {
                    self.z_min
                } else {
                    self.z_min + (self.z_max - self.z_min) * j as f64 / (nz - 1) as f64
                };
                (t, z)
            })
        })
    }
}

/// Outcome of one assumption check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Violating `(t, z)` sample, when there is one.
    pub witness: Option<(f64, f64)>,
    pub detail: String,
}

/// Pass/fail report for the benchmark and factor assumptions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks positivity and regularity of `f` and of the factor coefficients on
/// the sample domain.
pub fn validate_assumptions(
    factor: &FactorSpec,
    bench: &BenchmarkSpec,
    domain: &SampleDomain,
) -> AssumptionReport {
    let mut checks = Vec::new();
    let positive_factor = factor.dynamics.is_positive_preserving();

    let needs_positive_z = matches!(bench.rate, GrowthRate::Linear { .. });
    let mut witness = None;
    for (t, z) in domain.points() {
        if needs_positive_z && positive_factor && z <= 0.0 {
            continue;
        }
        let f = bench.rate.rate(t, z);
        if !(f > 0.0 && f.is_finite()) {
            witness = Some((t, z));
            break;
        }
    }
    if needs_positive_z && !positive_factor && witness.is_none() {
        witness = domain.points().find(|&(_, z)| z <= 0.0).or(Some((domain.t0, domain.z_min)));
    }
    checks.push(AssumptionCheck {
        name: "f_positive".into(),
        passed: witness.is_none(),
        witness,
        detail: if needs_positive_z && !positive_factor {
            "linear growth rate needs a positivity-preserving factor".into()
        } else {
            "f(t,z) > 0 on the sample grid".into()
        },
    });

    let mut witness = None;
    for (t, z) in domain.points() {
        let v = [bench.rate.rate_dz(t, z)];
        if v.iter().any(|x| !x.is_finite()) {
            witness = Some((t, z));
            break;
        }
    }
    checks.push(AssumptionCheck {
        name: "f_regular".into(),
        passed: witness.is_none(),
        witness,
        detail: "f(t,.) is C2 with finite derivative on the sample grid".into(),
    });

    let dyn_ok = match factor.dynamics {
        FactorDynamics::Constant { drift, vol } => drift.is_finite() && vol.is_finite(),
        FactorDynamics::OrnsteinUhlenbeck { kappa, mean, eta } => {
            kappa.is_finite() && kappa >= 0.0 && mean.is_finite() && eta.is_finite()
        }
        FactorDynamics::Geometric { growth, vol } => growth.is_finite() && vol.is_finite(),
    };
    checks.push(AssumptionCheck {
        name: "factor_coefficients".into(),
        passed: dyn_ok,
        witness: None,
        detail: "coefficients have bounded first and second derivatives".into(),
    });

    let z0_ok = !positive_factor || factor.z0 > 0.0;
    checks.push(AssumptionCheck {
        name: "factor_initial_value".into(),
        passed: z0_ok && factor.z0.is_finite(),
        witness: if z0_ok { None } else { Some((domain.t0, factor.z0)) },
        detail: "geometric factors start at a positive level".into(),
    });

    let in_box = factor.gamma.iter().all(|g| g.abs() <= 1.0);
    let norm = factor.gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    checks.push(AssumptionCheck {
        name: "gamma_weights".into(),
        passed: in_box && (norm - 1.0).abs() <= 1e-9,
        witness: None,
        detail: format!("components in [-1,1] and unit norm (norm {norm:.12})"),
    });

    checks.push(AssumptionCheck {
        name: "benchmark_level".into(),
        passed: bench.a >= 0.0,
        witness: None,
        detail: "initial benchmark level a >= 0".into(),
    });

    AssumptionReport { checks }
}
