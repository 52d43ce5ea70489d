//! JSON scenario files: a market, either a factor and benchmark or a
//! geometric index, and solver settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual_mc::McConfig;
use crate::dual_pde::PdeConfig;
use crate::error::{RatchetError, Result};
use crate::model::{
    validate_assumptions, AssumptionReport, BenchmarkSpec, FactorSpec, GbmIndexSpec, MarketParams, Model, SampleDomain,
};
use crate::tracker::{SimConfig, StrategySpec};

/// Resolution of the tabulated feedback portfolio used in simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyGrid {
    pub n_t: usize,
    pub n_z: usize,
    pub n_r: usize,
}

impl Default for PolicyGrid {
    fn default() -> Self {
        PolicyGrid { n_t: 101, n_z: 81, n_r: 161 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub pde: PdeConfig,
    pub mc: McConfig,
    pub sim: SimConfig,
    pub policy: PolicyGrid,
}

/// A dual probe point `(t, z, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub z: f64,
    pub u: f64,
}

/// A complete problem description.
///
/// Either `factor` and `benchmark` are given, or `index` (with optional
/// benchmark level `a`), in which case the factor is the index and the
/// benchmark grows at `lambda I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub market: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<GbmIndexSpec>,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_strategy")]
    pub strategy: StrategySpec,
    /// Initial buffer `x0 = v0 - a` for simulations.
    #[serde(default)]
    pub x0: f64,
    /// Dual probes for the Monte Carlo estimators and cross-checks.
    #[serde(default)]
    pub probes: Vec<Probe>,
}

fn default_strategy() -> StrategySpec {
    StrategySpec::FeedbackPrimal
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check_shape()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn check_shape(&self) -> Result<()> {
        match (&self.factor, &self.benchmark, &self.index) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => Ok(()),
            _ => Err(RatchetError::InvalidParameter(
                "scenario needs either factor and benchmark, or index".into(),
            )),
        }
    }

    /// The factor as solved (the index itself for index scenarios).
    pub fn factor_spec(&self) -> FactorSpec {
        match (&self.factor, &self.index) {
            (Some(f), _) => f.clone(),
            (None, Some(i)) => i.factor(),
            (None, None) => unreachable!("shape checked on load"),
        }
    }

    pub fn z0(&self) -> f64 {
        self.factor_spec().z0
    }

    pub fn model(&self) -> Result<Model> {
        self.check_shape()?;
        match (&self.factor, &self.benchmark, &self.index) {
            (Some(f), Some(b), None) => Model::new(self.market.clone(), f.clone(), b.clone()),
            (None, None, Some(i)) => Model::from_index(self.market.clone(), i, self.a),
            _ => unreachable!(),
        }
    }

    /// Market and index for the closed forms, when this is an index scenario.
    pub fn gbm(&self) -> Option<(&MarketParams, &GbmIndexSpec)> {
        self.index.as_ref().map(|i| (&self.market, i))
    }

    /// Structural assumptions checked on the default sample domain.
    pub fn assumptions(&self) -> Result<AssumptionReport> {
        self.market.validate()?;
        let factor = self.factor_spec();
        let bench = match (&self.benchmark, &self.index) {
            (Some(b), _) => b.clone(),
            (None, Some(i)) => i.benchmark(&self.market, self.a)?,
            _ => unreachable!(),
        };
        let horizon = self.market.effective_horizon()?;
        Ok(validate_assumptions(&factor, &bench, &SampleDomain::around(&factor, horizon)))
    }

    /// Configured probes, or a default set spread over `[0, T) x {z0 +- 0.5 scale} x [0, 1.5]`.
    pub fn probes_or_default(&self, horizon: f64) -> Vec<Probe> {
        if !self.probes.is_empty() {
            return self.probes.clone();
        }
        let z0 = self.z0();
        let scale = if self.index.is_some() { 0.5 * z0 } else { 0.5 };
        let mut out = Vec::new();
        for &(ft, dz, u) in &[
            (0.0, 0.0, 0.0),
            (0.0, 1.0, 0.4),
            (0.2, -1.0, 1.0),
            (0.4, 0.0, 0.2),
            (0.6, 1.0, 1.5),
            (0.8, -1.0, 0.6),
        ] {
            out.push(Probe { t: ft * horizon, z: z0 + dz * scale, u });
        }
        out
    }
}
