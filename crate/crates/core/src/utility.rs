//! Terminal utilities on the solvency cone.

use crate::cone::Cone;
use crate::error::{Error, Result};
use crate::vector::{all_finite, dot, norm1};

#[derive(Debug, Clone, PartialEq)]
pub enum UtilitySpec {
    /// `U(v) = w . v` with `w` in `K* \ {0}`.
    Linear { weights: Vec<f64> },
    /// `U(v) = log l(v)`.
    LogLiquidation,
    /// `U(v) = l(v)^gamma / gamma`, `gamma` in `(0, 1)`.
    PowerLiquidation { gamma: f64 },
}

impl UtilitySpec {
    pub fn linear(weights: Vec<f64>) -> Self {
        Self::Linear { weights }
    }

    pub fn power(gamma: f64) -> Self {
        Self::PowerLiquidation { gamma }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::LogLiquidation => "log_liquidation",
            Self::PowerLiquidation { .. } => "power_liquidation",
        }
    }

    pub fn validate(&self, cone: &Cone) -> Result<()> {
        match self {
            Self::Linear { weights } => {
                if weights.len() != cone.dim() {
                    return Err(Error::InvalidUtility(format!(
                        "weight vector has dimension {}, cone has {}",
                        weights.len(),
                        cone.dim()
                    )));
                }
                if !all_finite(weights) || norm1(weights) == 0.0 {
                    return Err(Error::InvalidUtility("weights must be finite and nonzero".into()));
                }
                if !cone.dual_contains(weights)? {
                    return Err(Error::InvalidUtility(format!("weights {weights:?} are not in K*")));
                }
                Ok(())
            }
            Self::LogLiquidation => Ok(()),
            Self::PowerLiquidation { gamma } => {
                if *gamma > 0.0 && *gamma < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidUtility(format!("power exponent {gamma} not in (0, 1)")))
                }
            }
        }
    }

    /// Whether the utility is a concave function of the liquidation value.
    pub fn is_liquidation(&self) -> bool {
        !matches!(self, Self::Linear { .. })
    }

    /// The scalar profile `phi` with `U(v) = phi(l(v))` for liquidation
    /// utilities; `-inf` outside the domain.
    pub fn profile(&self, c: f64) -> f64 {
        match self {
            Self::Linear { .. } => c,
            Self::LogLiquidation => {
                if c > 0.0 {
                    c.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::PowerLiquidation { gamma } => {
                if c >= 0.0 {
                    c.powf(*gamma) / gamma
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Derivative of [`Self::profile`] for `c > 0`.
    pub fn profile_slope(&self, c: f64) -> f64 {
        match self {
            Self::Linear { .. } => 1.0,
            Self::LogLiquidation => 1.0 / c,
            Self::PowerLiquidation { gamma } => c.powf(gamma - 1.0),
        }
    }
}

/// `U(v)` with the convention `U = -inf` off `K`.
pub fn evaluate_utility(spec: &UtilitySpec, cone: &Cone, v: &[f64]) -> Result<f64> {
    spec.validate(cone)?;
    evaluate_unchecked(spec, cone, v)
}

pub(crate) fn evaluate_unchecked(spec: &UtilitySpec, cone: &Cone, v: &[f64]) -> Result<f64> {
    if !cone.contains(v)? {
        return Ok(f64::NEG_INFINITY);
    }
    match spec {
        UtilitySpec::Linear { weights } => Ok(dot(weights, v)),
        _ => {
            // v in K forces l(v) >= 0; clamp the rounding residue
            let l = cone.liquidation_value(v)?.max(0.0);
            Ok(spec.profile(l))
        }
    }
}
