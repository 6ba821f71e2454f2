//! JSON run configuration. One document drives every subcommand; each
//! subcommand reads the sections it needs and rejects the rest as absent.

use std::path::{Path, PathBuf};

use nestmlmc::rates::{BiasPath, WeakEstimator};
use nestmlmc::{BsParams, CouplingMode, EstimatorKind, PayoffSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Required for `gaussian_linear`; `bs_nested` carries its own indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSpec>,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub coupling: CouplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationConfig>,
    /// Weak order used to solve the ML2R weights on the explicit-geometry path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// A `plan.json` written by `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Mlmc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    GaussianLinear(GaussianParams),
    BsNested(BsConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianParams {
    pub mu_y: f64,
    pub sigma_y: f64,
    pub sigma: f64,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self { mu_y: 0.0, sigma_y: 1.0, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsConfig {
    pub s0: f64,
    pub rate: f64,
    pub vol: f64,
    pub t1: f64,
    pub maturity: f64,
    pub strike: f64,
    pub loss_threshold: f64,
}

impl Default for BsConfig {
    fn default() -> Self {
        let p = BsParams::default();
        Self {
            s0: p.s0,
            rate: p.rate,
            vol: p.vol,
            t1: p.t1,
            maturity: p.maturity,
            strike: p.strike,
            loss_threshold: 8.0,
        }
    }
}

impl BsConfig {
    pub fn params(&self) -> BsParams {
        BsParams {
            s0: self.s0,
            rate: self.rate,
            vol: self.vol,
            t1: self.t1,
            maturity: self.maturity,
            strike: self.strike,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub k0: u64,
    #[serde(default = "two")]
    pub m: u64,
    #[serde(default = "one")]
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationConfig {
    pub n: u64,
    /// Level shares; uniform when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

/// Inputs of the auto-calibration path. Every rate left unset is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "two")]
    pub k0: u64,
    #[serde(default = "two")]
    pub m: u64,
    #[serde(default = "default_pilot_n")]
    pub pilot_n: u64,
    #[serde(default = "default_pilot_levels")]
    pub pilot_levels: usize,
    /// Replicates per grid point when the weak rate has to be measured by
    /// simulation.
    #[serde(default = "default_weak_n")]
    pub weak_n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_inf: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            k0: 2,
            m: 2,
            pilot_n: default_pilot_n(),
            pilot_levels: default_pilot_levels(),
            weak_n: default_weak_n(),
            alpha: None,
            c1: None,
            beta: None,
            v1: None,
            c_inf: None,
        }
    }
}

fn default_pilot_n() -> u64 {
    4000
}

fn default_pilot_levels() -> usize {
    5
}

fn default_weak_n() -> u64 {
    200_000
}

fn one() -> usize {
    1
}

fn two() -> u64 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakConfig {
    #[serde(default = "crude_weak")]
    pub estimator: WeakEstimator,
    #[serde(default = "analytic")]
    pub path: BiasPath,
    pub h_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

fn crude_weak() -> WeakEstimator {
    WeakEstimator::Crude
}

fn analytic() -> BiasPath {
    BiasPath::Analytic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongConfig {
    pub k0: u64,
    #[serde(default = "two")]
    pub m: u64,
    /// Level indices `j >= 2` probed; the geometry depth is their maximum.
    pub levels: Vec<usize>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    pub x_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Strictly decreasing accuracy targets.
    pub epsilons: Vec<f64>,
    #[serde(default = "all_families")]
    pub families: Vec<EstimatorKind>,
    pub replications: usize,
    /// Total inner evaluations allowed for simulating the crude RMSE at one
    /// target; above it the row keeps the planned cost and reports no RMSE.
    #[serde(default = "default_crude_budget")]
    pub crude_budget: f64,
}

fn all_families() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Crude, EstimatorKind::Mlmc, EstimatorKind::Ml2r]
}

fn default_crude_budget() -> f64 {
    1e9
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.epsilons.is_empty() {
            return Err(CliError::config("sweep.epsilons is empty"));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(CliError::config("sweep.epsilons must lie in (0, 1)"));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::config("sweep.epsilons must be strictly decreasing"));
        }
        if self.replications < 10 {
            return Err(CliError::config(format!(
                "sweep.replications must be at least 10, got {}",
                self.replications
            )));
        }
        if self.families.is_empty() {
            return Err(CliError::config("sweep.families is empty"));
        }
        Ok(())
    }
}

/// Flag values that override top-level fields of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config document. A result file written by this tool is also
    /// accepted: its embedded `config` object is used.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        #[derive(Deserialize)]
        struct Embedded {
            config: serde_json::Value,
        }
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::parse(&e))?;
        if value.get("model").is_none() {
            if let Ok(Embedded { config }) = serde_json::from_value::<Embedded>(value) {
                return serde_json::from_value(config)
                    .map_err(|e| CliError::config(format!("embedded config: {e}")));
            }
        }
        serde_json::from_str(text).map_err(|e| CliError::parse(&e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies flag overrides and fills the fields that have defaults, so the
    /// result files record everything the run depended on.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.out.is_some() {
            self.output = o.out.clone();
        }
        if self.seed.is_none() {
            return Err(CliError::config("missing field `seed` (set it in the config or pass --seed)"));
        }
        let workers = self.workers.unwrap_or(1);
        if workers == 0 {
            return Err(CliError::config("workers must be at least 1"));
        }
        self.workers = Some(workers);
        match (&self.model, &self.payoff) {
            (ModelConfig::GaussianLinear(_), None) => {
                return Err(CliError::config("gaussian_linear needs a `payoff`"));
            }
            (ModelConfig::BsNested(_), Some(_)) => {
                return Err(CliError::config(
                    "bs_nested has a fixed indicator payoff; set model.params.loss_threshold instead of `payoff`",
                ));
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn calibration_or_default(&self) -> CalibrationConfig {
        self.calibration.clone().unwrap_or_default()
    }
}
