//! Bergman kernel comparison between `L^k` and the twist `(L + eps A)^k`,
//! `eps k = m`, with `A = O(1)` carrying the Fubini-Study metric.

use crate::error::{Error, Result};
use crate::pluripotential::PolarizedModel;
use crate::radial::GridFunction;
use crate::sections::{bergman_density, SectionSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub k: u32,
    pub m: u32,
    /// `max_s B_{L^k,u} / B_{(L+eps A)^k,u}` on the grid.
    pub max_ratio: f64,
    /// `(1 + C/m)^2`.
    pub bound: f64,
}

impl Comparison {
    pub fn slack(&self) -> f64 {
        self.bound - self.max_ratio
    }
}

/// Slack allowed on top of the bound before the theorem counts as violated.
pub const COMPARISON_TOL: f64 = 1e-8;

/// Compares unnormalized Bergman densities of `L^k` and its `m`-twist.
/// `c_hat` is the peak-section constant of the twisting metric; it is zero
/// for Fubini-Study, where peak sections never overshoot.
pub fn comparison_ratio(model: &PolarizedModel, u: &GridFunction, k: u32, m: u32, c_hat: f64) -> Result<Comparison> {
    if m == 0 {
        return Err(Error::InvalidArgument("comparison needs a twist m >= 1".into()));
    }
    let plain = bergman_density(&SectionSpace::new(model, k, 0)?, u, false)?;
    let twisted = bergman_density(&SectionSpace::new(model, k, m)?, u, false)?;
    let max_ratio = plain
        .log_density
        .values()
        .iter()
        .zip(twisted.log_density.values())
        .map(|(a, b)| (a - b).exp())
        .fold(f64::NEG_INFINITY, f64::max);
    let c = c_hat.max(0.0);
    let bound = (1.0 + c / m as f64).powi(2);
    if max_ratio > bound + COMPARISON_TOL {
        return Err(Error::ComparisonViolation { max_ratio, bound });
    }
    Ok(Comparison { k, m, max_ratio, bound })
}

/// Closed-form ratio for `Phi_0 = d phi_FS`, `u = 0`: both densities are the
/// logistic profile scaled by their dimensions.
pub fn fs_ratio(d: u32, k: u32, m: u32) -> f64 {
    let dk = (d * k) as f64;
    (dk - 1.0) / (dk + m as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::SoftMax;
    use crate::radial::Grid;

    #[test]
    fn fs_ratio_is_constant_and_exact() {
        for d in [1, 2] {
            let model = PolarizedModel::fubini_study(Grid::default(), d).unwrap();
            let u = GridFunction::zero(*model.grid());
            for (k, m) in [(4, 1), (16, 2), (8, 8)] {
                let c = comparison_ratio(&model, &u, k, m, 0.0).unwrap();
                assert!((c.max_ratio - fs_ratio(d, k, m)).abs() < 1e-8);
                assert_eq!(c.bound, 1.0);
            }
        }
    }

    #[test]
    fn ratio_falls_with_twist() {
        let model = PolarizedModel::fubini_study(Grid::default(), 1).unwrap();
        let u = GridFunction::zero(*model.grid());
        let r: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&m| comparison_ratio(&model, &u, 8, m, 0.0).unwrap().max_ratio)
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn degenerate_reference_stays_below_one() {
        let sm = SoftMax::new(vec![(0.0, 0.0), (2.0, -2.0)], 0.5).unwrap();
        let model = PolarizedModel::soft_max(Grid::default(), 2, &sm).unwrap();
        let u = GridFunction::zero(*model.grid());
        for m in [1, 2, 4] {
            assert!(comparison_ratio(&model, &u, 16, m, 0.0).unwrap().max_ratio <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn zero_twist_rejected() {
        let model = PolarizedModel::fubini_study(Grid::default(), 1).unwrap();
        assert!(comparison_ratio(&model, &GridFunction::zero(*model.grid()), 4, 0, 0.0).is_err());
    }
}
