use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five scalars of the steady and evolution problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Prey growth rate.
    pub lambda: f64,
    /// Predator growth rate; may be zero or negative.
    pub mu: f64,
    /// Predation loss coefficient of the prey.
    pub b: f64,
    /// Conversion coefficient of the predator.
    pub c: f64,
    /// Strength of the directed predator flux.
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, mu: f64, b: f64, c: f64, alpha: f64) -> Result<Self> {
        let p = ModelParams {
            lambda,
            mu,
            b,
            c,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("b", self.b),
            ("c", self.c),
            ("alpha", self.alpha),
        ] {
            if !v.is_finite() {
                return Err(Error::BadParameter(format!("{name} = {v} is not finite")));
            }
        }
        if !(self.b > 0.0) {
            return Err(Error::BadParameter(format!("b must be positive, got {}", self.b)));
        }
        if !(self.c > 0.0) {
            return Err(Error::BadParameter(format!("c must be positive, got {}", self.c)));
        }
        if self.alpha < 0.0 {
            return Err(Error::BadParameter(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Upper bound `max{λ/b, μ + cλ}` for the predator density of any
    /// positive steady state.
    pub fn predator_bound(&self) -> f64 {
        (self.lambda / self.b).max(self.mu + self.c * self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_coefficients() {
        assert!(ModelParams::new(1.0, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, -0.5).is_err());
        assert!(ModelParams::new(1.0, -3.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn predator_bound_picks_the_larger_term() {
        let p = ModelParams::new(2.0, 1.0, 4.0, 1.0, 0.0).unwrap();
        assert_eq!(p.predator_bound(), 3.0);
        let p = ModelParams::new(2.0, -3.0, 0.5, 1.0, 0.0).unwrap();
        assert_eq!(p.predator_bound(), 4.0);
    }
}
