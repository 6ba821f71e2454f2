use nestmlmc::model::{BsNested, GaussianLinear};
use nestmlmc::{builtin_bs_nested, builtin_gaussian_linear, NestedModel, Payoff};

use crate::config::{ModelConfig, RunConfig};
use crate::error::CliError;

/// The built-in models, resolved from a config.
pub enum AnyModel {
    Gaussian(NestedModel<GaussianLinear>),
    Bs(NestedModel<BsNested>),
}

/// Runs `$body` with `$m` bound to the concrete model.
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::models::AnyModel::Gaussian($m) => $body,
            $crate::models::AnyModel::Bs($m) => $body,
        }
    };
}

pub fn build(cfg: &RunConfig) -> Result<AnyModel, CliError> {
    match &cfg.model {
        ModelConfig::GaussianLinear(p) => {
            let spec = cfg.payoff.ok_or_else(|| CliError::config("gaussian_linear needs a `payoff`"))?;
            Ok(AnyModel::Gaussian(builtin_gaussian_linear(p.mu_y, p.sigma_y, p.sigma, Payoff::from_spec(spec))?))
        }
        ModelConfig::BsNested(p) => Ok(AnyModel::Bs(builtin_bs_nested(p.params(), p.loss_threshold)?)),
    }
}
