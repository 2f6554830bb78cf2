//! Trust-region radius bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionState {
    /// Radius in metres.
    pub epsilon: f64,
    /// Minimum ratio for accepting a step.
    pub eta_s: f64,
    /// Ratio from which the radius grows.
    pub eta_v: f64,
    pub gamma_n: f64,
    pub gamma_d: f64,
    pub min_epsilon: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl TrustRegionState {
    pub fn new(epsilon: f64, min_epsilon: f64) -> Result<Self> {
        let s = Self {
            epsilon,
            eta_s: 0.25,
            eta_v: 0.75,
            gamma_n: 2.0,
            gamma_d: 0.5,
            min_epsilon,
            accepted: 0,
            rejected: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.eta_s
            && self.eta_s < self.eta_v
            && self.eta_v < 1.0
            && self.gamma_n > 1.0
            && 0.0 < self.gamma_d
            && self.gamma_d < 1.0
            && self.epsilon > 0.0
            && self.min_epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid("inconsistent trust-region parameters"))
        }
    }

    pub fn accepts(&self, rho: f64) -> bool {
        rho >= self.eta_s
    }

    /// Radius update for a step with ratio `rho`; also counts the step.
    pub fn update_radius(mut self, rho: f64) -> Self {
        if rho >= self.eta_v {
            self.epsilon *= self.gamma_n;
        } else if rho < self.eta_s {
            self.epsilon = (self.epsilon * self.gamma_d).max(self.min_epsilon);
        }
        if self.accepts(rho) {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
        self
    }

    /// True once a rejection can no longer shrink the radius.
    pub fn at_floor(&self) -> bool {
        self.epsilon <= self.min_epsilon
    }
}

/// Actual over predicted decrease. A null step gives `0`; a step the model
/// does not predict to help, or that lands on an infinite objective, gives
/// `−∞`.
pub fn acceptance_ratio(f_old: f64, f_new: f64, model_new: f64, moved: bool) -> f64 {
    if !moved {
        return 0.0;
    }
    let predicted = f_old - model_new;
    if !f_new.is_finite() || !(predicted > 0.0) {
        return f64::NEG_INFINITY;
    }
    (f_old - f_new) / predicted
}
