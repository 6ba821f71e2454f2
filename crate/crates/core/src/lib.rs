//! Nested expectations `E[f(E[F(Y, Z) | Y])]` by crude nested Monte Carlo,
//! multilevel (MLMC) and weighted multilevel (ML2R) estimators, with tools to
//! measure weak and strong error rates and to calibrate a run for a target RMSE.
//!
//! ```
//! use nestmlmc::{builtin_gaussian_linear, estimate_mlmc, Allocation, CouplingMode, Executor, LevelGeometry, Payoff, StreamKey};
//!
//! let model = builtin_gaussian_linear(0.0, 1.0, 1.0, Payoff::square()).unwrap();
//! let geometry = LevelGeometry::new(2, 2, 4).unwrap();
//! let allocation = Allocation::new(4000, vec![0.55, 0.25, 0.12, 0.08]).unwrap();
//! let exec = Executor::sequential();
//! let r = estimate_mlmc(&model, &geometry, &allocation, CouplingMode::Antithetic, StreamKey::root(7), &exec).unwrap();
//! assert!((r.value - 1.0).abs() < 5.0 * r.std_error + 0.07);
//! ```

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod calibrate;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod model;
pub mod rates;
pub mod stats;
pub mod weights;

pub use calibrate::{plan, run_pilot, theoretical_cost, CalibrationInput, CalibrationPlan, PilotStats};
pub use error::{Error, Result};
pub use estimator::{
    estimate_crude, estimate_ml2r, estimate_mlmc, level_cost, Allocation, CouplingMode, EstimateResult, EstimatorKind,
    LevelGeometry, LevelStats,
};
pub use exec::Executor;
pub use model::{
    builtin_bs_nested, builtin_gaussian_linear, BsParams, Direction, InnerProblem, NestedModel, Payoff, PayoffKind,
    PayoffSpec, StreamKey,
};
pub use rates::{RateReport, WeakRateSpec};
pub use weights::{solve_weights, WeightSpec, WeightVector};
