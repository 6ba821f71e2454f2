use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Side of the threshold an indicator payoff counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `1{x <= a}`
    #[serde(alias = "le")]
    Below,
    /// `1{x >= a}`
    #[serde(alias = "ge")]
    Above,
}

/// Regularity class of a payoff; decides which strong rate applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffKind {
    Smooth,
    Lipschitz,
    /// `f'` is `rho`-Hölder.
    HolderDerivative { rho: f64 },
    Indicator { threshold: f64, direction: Direction },
}

/// Serializable description of the built-in payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    /// `x^2`
    Square,
    /// `max(x, 0)`
    PositivePart,
    /// `a x + b`
    Affine { a: f64, b: f64 },
    Indicator { threshold: f64, direction: Direction },
}

#[derive(Clone)]
enum PayoffFn {
    Affine(f64, f64),
    Square,
    PositivePart,
    Indicator(f64, Direction),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Clone)]
pub struct Payoff {
    kind: PayoffKind,
    func: PayoffFn,
    label: String,
    /// `[f]_Lip`
    pub lip_const: Option<f64>,
    /// `[f']_rho`
    pub holder_const: Option<f64>,
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Payoff")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .field("lip_const", &self.lip_const)
            .field("holder_const", &self.holder_const)
            .finish()
    }
}

impl Payoff {
    pub fn square() -> Self {
        Self {
            kind: PayoffKind::HolderDerivative { rho: 1.0 },
            func: PayoffFn::Square,
            label: "square".into(),
            lip_const: None,
            holder_const: Some(2.0),
        }
    }

    pub fn positive_part() -> Self {
        Self {
            kind: PayoffKind::Lipschitz,
            func: PayoffFn::PositivePart,
            label: "positive_part".into(),
            lip_const: Some(1.0),
            holder_const: None,
        }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self {
            kind: PayoffKind::Smooth,
            func: PayoffFn::Affine(a, b),
            label: format!("affine({a}, {b})"),
            lip_const: Some(a.abs()),
            holder_const: Some(0.0),
        }
    }

    pub fn indicator(threshold: f64, direction: Direction) -> Self {
        let op = match direction {
            Direction::Below => "<=",
            Direction::Above => ">=",
        };
        Self {
            kind: PayoffKind::Indicator { threshold, direction },
            func: PayoffFn::Indicator(threshold, direction),
            label: format!("1{{x {op} {threshold}}}"),
            lip_const: None,
            holder_const: None,
        }
    }

    /// User payoff. `Lipschitz` payoffs must carry their Lipschitz constant and
    /// `Indicator` kinds are reserved for [`Payoff::indicator`].
    pub fn custom<F>(
        label: impl Into<String>,
        kind: PayoffKind,
        f: F,
        lip_const: Option<f64>,
        holder_const: Option<f64>,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match kind {
            PayoffKind::Lipschitz if lip_const.is_none() => {
                return invalid("a Lipschitz payoff needs its Lipschitz constant");
            }
            PayoffKind::HolderDerivative { rho } if !(rho > 0.0 && rho <= 1.0) => {
                return invalid(format!("Hölder exponent must lie in (0, 1], got {rho}"));
            }
            PayoffKind::Indicator { .. } => {
                return invalid("indicator payoffs are built with Payoff::indicator");
            }
            _ => {}
        }
        Ok(Self { kind, func: PayoffFn::Custom(Arc::new(f)), label: label.into(), lip_const, holder_const })
    }

    pub fn from_spec(spec: PayoffSpec) -> Self {
        match spec {
            PayoffSpec::Square => Self::square(),
            PayoffSpec::PositivePart => Self::positive_part(),
            PayoffSpec::Affine { a, b } => Self::affine(a, b),
            PayoffSpec::Indicator { threshold, direction } => Self::indicator(threshold, direction),
        }
    }

    /// Built-in description, `None` for custom payoffs.
    pub fn spec(&self) -> Option<PayoffSpec> {
        match self.func {
            PayoffFn::Square => Some(PayoffSpec::Square),
            PayoffFn::PositivePart => Some(PayoffSpec::PositivePart),
            PayoffFn::Affine(a, b) => Some(PayoffSpec::Affine { a, b }),
            PayoffFn::Indicator(threshold, direction) => Some(PayoffSpec::Indicator { threshold, direction }),
            PayoffFn::Custom(_) => None,
        }
    }

    /// `c f`, keeping the regularity class.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        let kind = match self.kind {
            PayoffKind::Indicator { .. } => PayoffKind::Lipschitz,
            k => k,
        };
        Self {
            kind,
            func: PayoffFn::Custom(Arc::new(move |x| c * inner.eval(x))),
            label: format!("{c} * {}", self.label),
            lip_const: self.lip_const.map(|l| l * c.abs()).or(Some(f64::INFINITY)),
            holder_const: self.holder_const.map(|l| l * c.abs()),
        }
    }

    pub fn kind(&self) -> PayoffKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self.func, PayoffFn::Indicator(..))
            || matches!(self.kind, PayoffKind::Indicator { .. })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.func {
            PayoffFn::Affine(a, b) => a * x + b,
            PayoffFn::Square => x * x,
            PayoffFn::PositivePart => x.max(0.0),
            PayoffFn::Indicator(a, Direction::Below) => f64::from(u8::from(x <= *a)),
            PayoffFn::Indicator(a, Direction::Above) => f64::from(u8::from(x >= *a)),
            PayoffFn::Custom(f) => f(x),
        }
    }
}
