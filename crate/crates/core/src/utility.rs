//! Terminal-wealth utility functions admitting closed-form robust optima.

use crate::error::{Error, Result};

/// `log(x)`, `x^gamma` with `0 < gamma < 1`, or `-beta e^(-beta x)` with
/// `beta > 0`.
///
/// Log and Power control the *fraction* of wealth in risky assets; the
/// Exponential investor controls the *cash amount* instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    Log,
    Power { gamma: f64 },
    Exponential { beta: f64 },
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            UtilitySpec::Log => Ok(()),
            UtilitySpec::Power { gamma } => {
                if gamma.is_finite() && *gamma > 0.0 && *gamma < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "power utility needs gamma in (0, 1), got {gamma}"
                    )))
                }
            }
            UtilitySpec::Exponential { beta } => {
                if beta.is_finite() && *beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "exponential utility needs beta > 0, got {beta}"
                    )))
                }
            }
        }
    }

    /// Whether wealth must stay strictly positive for the utility to be
    /// defined (true for Log and Power).
    pub fn requires_positive_wealth(&self) -> bool {
        matches!(self, UtilitySpec::Log | UtilitySpec::Power { .. })
    }

    /// Whether the natural control variable is a cash amount rather than a
    /// wealth fraction.
    pub fn is_cash_strategy(&self) -> bool {
        matches!(self, UtilitySpec::Exponential { .. })
    }

    /// Utility of terminal wealth, with a domain check.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if self.requires_positive_wealth() && x <= 0.0 {
            return Err(Error::domain(format!(
                "wealth {x} is outside the domain of {self:?}"
            )));
        }
        Ok(self.evaluate_unchecked(x))
    }

    /// Utility without the domain check; `x <= 0` yields `-inf`/NaN for
    /// Log/Power, matching the mathematical limit.
    pub fn evaluate_unchecked(&self, x: f64) -> f64 {
        match self {
            UtilitySpec::Log => x.ln(),
            UtilitySpec::Power { gamma } => x.powf(*gamma),
            UtilitySpec::Exponential { beta } => -beta * (-beta * x).exp(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(UtilitySpec::Log.validate().is_ok());
        assert!(UtilitySpec::Power { gamma: 0.5 }.validate().is_ok());
        assert!(UtilitySpec::Power { gamma: 0.0 }.validate().is_err());
        assert!(UtilitySpec::Power { gamma: 1.0 }.validate().is_err());
        assert!(UtilitySpec::Exponential { beta: 1.0 }.validate().is_ok());
        assert!(UtilitySpec::Exponential { beta: 0.0 }.validate().is_err());
        assert!(UtilitySpec::Exponential { beta: f64::NAN }.validate().is_err());
    }

    #[test]
    fn log_and_power_reject_nonpositive_wealth() {
        assert!(UtilitySpec::Log.evaluate(0.0).is_err());
        assert!(UtilitySpec::Power { gamma: 0.5 }.evaluate(-1.0).is_err());
        // Exponential is defined on all of R (cash wealth can go negative).
        assert!(UtilitySpec::Exponential { beta: 1.0 }.evaluate(-1.0).is_ok());
    }

    #[test]
    fn values_match_definitions() {
        assert_eq!(UtilitySpec::Log.evaluate(1.0).unwrap(), 0.0);
        assert!((UtilitySpec::Power { gamma: 0.5 }.evaluate(4.0).unwrap() - 2.0).abs() < 1e-15);
        let u = UtilitySpec::Exponential { beta: 2.0 }.evaluate(0.0).unwrap();
        assert_eq!(u, -2.0);
    }
}
