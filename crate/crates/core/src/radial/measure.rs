//! Stieltjes measures of slope functions, `d Phi'(s)`.
//!
//! Node slopes are centered differences, one-sided at the two ends. Cell
//! masses are differences of consecutive node slopes, so the total always
//! telescopes to `a+ - a-` once the two boundary defects are added.

use crate::error::{Error, Result};

use super::grid::{default_conv_tol, Grid, GridFunction};
use super::quadrature::Compensated;

/// Default tolerance for negative cell masses.
pub const DEFAULT_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeMeasure {
    grid: Grid,
    cell_masses: Vec<f64>,
    left_defect: f64,
    right_defect: f64,
}

impl SlopeMeasure {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Mass of each cell `[s_i, s_{i+1}]`. Tiny negative values inside the
    /// tolerance are kept as computed so the total telescopes exactly.
    pub fn cell_masses(&self) -> &[f64] {
        &self.cell_masses
    }

    pub fn left_defect(&self) -> f64 {
        self.left_defect
    }

    pub fn right_defect(&self) -> f64 {
        self.right_defect
    }

    pub fn total(&self) -> f64 {
        let mut acc = Compensated::default();
        acc.add(self.left_defect);
        for m in &self.cell_masses {
            acc.add(*m);
        }
        acc.add(self.right_defect);
        acc.total()
    }

    /// Mass carried by cells whose midpoint lies in `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let mut acc = Compensated::default();
        for (i, m) in self.cell_masses.iter().enumerate() {
            let mid = 0.5 * (self.grid.node(i) + self.grid.node(i + 1));
            if mid >= a && mid <= b {
                acc.add(*m);
            }
        }
        acc.total()
    }

    /// Cumulative mass from `-inf` up to each node (left defect included).
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = Compensated::default();
        acc.add(self.left_defect);
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(acc.total());
        for m in &self.cell_masses {
            acc.add(*m);
            out.push(acc.total());
        }
        out
    }

    /// Combines two measures on the same grid linearly.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            cell_masses: self
                .cell_masses
                .iter()
                .zip(&other.cell_masses)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            left_defect: a * self.left_defect + b * other.left_defect,
            right_defect: a * self.right_defect + b * other.right_defect,
        })
    }
}

/// Node slopes: one-sided at the ends, centered inside.
pub fn node_slopes(f: &GridFunction) -> Vec<f64> {
    let v = f.values();
    let h = f.grid().h();
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / h
            } else if i + 1 == n {
                (v[n - 1] - v[n - 2]) / h
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Distribution function of the normalized slope measure at the nodes,
/// `(Phi'(s_i) - a-) / (a+ - a-)`, with fourth-order slopes away from the
/// ends. Much closer to the exact slope than the cell cumulative sums of
/// [`SlopeMeasure::cdf`] when `phi` is smooth.
pub fn slope_cdf(phi: &GridFunction) -> Vec<f64> {
    let v = phi.values();
    let h = phi.grid().h();
    let n = v.len();
    let (lo, hi) = (phi.left_slope(), phi.right_slope());
    let mut c = node_slopes(phi);
    for i in 2..n.saturating_sub(2) {
        c[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    c.into_iter().map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Slope measure of a convex function. Cells whose mass is more negative
/// than `max(mass_tol, conv_tol/h)` are reported as a convexity violation.
pub fn slope_measure(phi: &GridFunction) -> Result<SlopeMeasure> {
    let tol = DEFAULT_MASS_TOL.max(default_conv_tol(phi.values()) / phi.grid().h());
    slope_measure_with_tolerance(phi, tol)
}

pub fn slope_measure_with_tolerance(phi: &GridFunction, mass_tol: f64) -> Result<SlopeMeasure> {
    let c = node_slopes(phi);
    let cell_masses: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some((cell, &mass)) = cell_masses.iter().enumerate().find(|(_, m)| **m < -mass_tol) {
        return Err(Error::NegativeMass { cell, mass });
    }
    Ok(SlopeMeasure {
        grid: *phi.grid(),
        left_defect: c[0] - phi.left_slope(),
        right_defect: phi.right_slope() - c[c.len() - 1],
        cell_masses,
    })
}

/// Signed slope measure of an arbitrary grid function (no sign check).
pub fn signed_slope_measure(phi: &GridFunction) -> SlopeMeasure {
    slope_measure_with_tolerance(phi, f64::INFINITY).expect("no tolerance")
}

/// `integral f dmu`: each cell weighted by the midpoint value of the linear
/// interpolant, defects by the boundary values.
pub fn pair_measure(f: &GridFunction, mu: &SlopeMeasure) -> Result<f64> {
    if *f.grid() != mu.grid {
        return Err(Error::GridMismatch);
    }
    let v = f.values();
    let mut acc = Compensated::default();
    acc.add(mu.left_defect * v[0]);
    for (i, m) in mu.cell_masses.iter().enumerate() {
        acc.add(0.5 * (v[i] + v[i + 1]) * m);
    }
    acc.add(mu.right_defect * v[v.len() - 1]);
    Ok(acc.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{fubini_study, logistic, logistic_density};

    #[test]
    fn fourth_order_cdf_of_fs_is_logistic() {
        let g = Grid::default();
        let f = fubini_study(g, 2.0);
        let err = slope_cdf(&f)
            .iter()
            .zip(g.nodes())
            .map(|(c, s)| (c - logistic(s)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn fubini_study_masses() {
        // h = 0.01, so -1 and 1 are nodes.
        let grid = Grid::new(-30.0, 30.0, 6001).unwrap();
        let mu = slope_measure(&fubini_study(grid, 1.0)).unwrap();
        assert!((mu.total() - 1.0).abs() < 1e-15);
        let mid = mu.mass_between(-1.0, 1.0);
        let want = logistic(1.0) - logistic(-1.0);
        assert!((want - 0.462117157260).abs() < 1e-11);
        assert!((mid - want).abs() < 1e-5, "{mid}");
    }

    #[test]
    fn kink_carries_full_mass() {
        let grid = Grid::new(-2.0, 2.0, 41).unwrap();
        let f = GridFunction::from_fn(grid, |s| 2.0 * s.max(0.0), 0.0, 2.0).unwrap();
        let mu = slope_measure(&f).unwrap();
        assert!((mu.total() - 2.0).abs() < 1e-15);
        let nonzero: Vec<_> = mu.cell_masses().iter().filter(|m| m.abs() > 1e-12).collect();
        // Centered slopes spread the jump over the two cells around s = 0.
        assert_eq!(nonzero.len(), 2);
        assert!((mu.mass_between(-0.1, 0.1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn affine_has_no_mass() {
        let grid = Grid::new(-2.0, 2.0, 41).unwrap();
        let f = GridFunction::from_fn(grid, |s| 0.7 * s - 1.0, 0.7, 0.7).unwrap();
        let mu = slope_measure(&f).unwrap();
        assert!(mu.cell_masses().iter().all(|m| m.abs() < 1e-14));
        assert!(mu.total().abs() < 1e-14);
    }

    #[test]
    fn pairings_against_logistic_measure() {
        let grid = Grid::default();
        let phi = fubini_study(grid, 1.0);
        let mu = slope_measure(&phi).unwrap();
        let odd = GridFunction::from_fn(grid, |s| s, 1.0, 1.0).unwrap();
        assert!(pair_measure(&odd, &mu).unwrap().abs() < 1e-10);
        let one = GridFunction::constant(grid, 1.0);
        assert!((pair_measure(&one, &mu).unwrap() - mu.total()).abs() < 1e-15);
        let self_pair = pair_measure(&phi, &mu).unwrap();
        // Second-order accurate: the error is about h^2 / 18.
        assert!((self_pair - 1.0).abs() < 2e-5, "{self_pair}");
    }

    #[test]
    fn concave_input_is_rejected() {
        let grid = Grid::new(-1.0, 1.0, 21).unwrap();
        let f = GridFunction::from_fn(grid, |s| -s * s, 2.0, -2.0).unwrap();
        assert!(matches!(slope_measure(&f), Err(Error::NegativeMass { .. })));
    }

    #[test]
    fn cdf_matches_logistic() {
        let grid = Grid::default();
        let mu = slope_measure(&fubini_study(grid, 1.0)).unwrap();
        let cdf = mu.cdf();
        let err = grid.nodes().zip(&cdf).fold(0.0_f64, |m, (s, c)| {
            // The cdf at node i is the node slope there, a centered difference.
            let _ = logistic_density(s);
            m.max((c - logistic(s)).abs())
        });
        assert!(err < 1e-5, "{err:e}");
    }
}
