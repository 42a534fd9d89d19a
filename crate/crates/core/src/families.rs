//! Closed-form reference potentials: Fubini-Study and soft-max (log-sum-exp)
//! families, with exact derivatives.

use crate::error::{Error, Result};
use crate::radial::{Grid, GridFunction};

/// `log(1 + e^s)` without overflow or cancellation.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// `e^s / (1 + e^s)`.
pub fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `e^s / (1 + e^s)^2`, the curvature of `softplus`.
pub fn logistic_density(s: f64) -> f64 {
    let e = (-s.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `log` of [`logistic_density`].
pub fn log_logistic_density(s: f64) -> f64 {
    -s.abs() - 2.0 * (-s.abs()).exp().ln_1p()
}

pub fn sech(s: f64) -> f64 {
    let e = (-s.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// `a * log(1 + e^s)`, slopes `(0, a)`.
pub fn fubini_study(grid: Grid, a: f64) -> GridFunction {
    GridFunction::from_fn(grid, |s| a * softplus(s), 0.0, a).expect("softplus is finite")
}

/// Soft-max `tau * log sum_i exp((a_i s + b_i) / tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMax {
    terms: Vec<(f64, f64)>,
    tau: f64,
}

impl SoftMax {
    pub fn new(terms: Vec<(f64, f64)>, tau: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("soft-max needs at least one term".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("soft-max sharpness must be positive, got {tau}")));
        }
        if terms.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("soft-max terms must be finite".into()));
        }
        Ok(Self { terms, tau })
    }

    pub fn slopes(&self) -> (f64, f64) {
        let lo = self.terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let hi = self.terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Value, first and second derivative at `s`.
    pub fn jet(&self, s: f64) -> [f64; 3] {
        let x: Vec<f64> = self.terms.iter().map(|(a, b)| (a * s + b) / self.tau).collect();
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = self.terms.iter().zip(&w).map(|((a, _), w)| a * w).sum::<f64>() / z;
        let var: f64 = self
            .terms
            .iter()
            .zip(&w)
            .map(|((a, _), w)| w * (a - mean) * (a - mean))
            .sum::<f64>()
            / z;
        [self.tau * (m + z.ln()), mean, var / self.tau]
    }

    pub fn value(&self, s: f64) -> f64 {
        self.jet(s)[0]
    }

    pub fn sample(&self, grid: Grid) -> GridFunction {
        let (lo, hi) = self.slopes();
        GridFunction::from_fn(grid, |s| self.value(s), lo, hi).expect("soft-max is finite")
    }
}
