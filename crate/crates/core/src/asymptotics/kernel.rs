//! Ambient Bergman kernels of `A^p = O(p)` with the L² product against the
//! curvature form `omega = dd^c phi_A`.
//!
//! With `x`, `y` on the positive real axis and `s = log|z|^2`, the monomials
//! `z^j` are orthogonal and
//!
//! ```text
//! G_j     = int exp(j s - p phi_A(s)) phi_A''(s) ds
//! K_p(s)  = sum_j exp(j s - p phi_A(s)) / G_j
//! K(y, x) = sum_j exp(j (s_x + s_y) / 2) / G_j      (coefficient form)
//! ```
//!
//! Everything is assembled in the log domain.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::families::{fubini_study, log_logistic_density, logistic_density, sech, softplus};
use crate::radial::quadrature::{log_sum_exp, log_weighted_integral, trapezoid};
use crate::radial::{ConvexPotential, Grid, GridFunction};

/// A positive radial metric on `A = O(1)`: potential with slopes `(0, 1)`
/// and the log of its (strictly positive) curvature density.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientMetric {
    phi: ConvexPotential,
    log_curvature: GridFunction,
    label: String,
}

impl AmbientMetric {
    pub fn fubini_study(grid: Grid) -> Result<Self> {
        let phi = ConvexPotential::new(fubini_study(grid, 1.0))?;
        let log_curvature = GridFunction::from_fn(grid, log_logistic_density, 1.0, -1.0)?;
        Ok(Self {
            phi,
            log_curvature,
            label: "fs".into(),
        })
    }

    /// `phi_FS + eps sech(s)`, with curvature `sigma(1-sigma) + eps sech (1 - 2 sech^2)`.
    pub fn perturbed_fs(grid: Grid, eps: f64) -> Result<Self> {
        let phi = GridFunction::from_fn(grid, |s| softplus(s) + eps * sech(s), 0.0, 1.0)?;
        let curv: Vec<f64> = grid
            .nodes()
            .map(|s| {
                let h = sech(s);
                logistic_density(s) + eps * h * (1.0 - 2.0 * h * h)
            })
            .collect();
        let label = format!("fs+{eps}*sech");
        Self::with_curvature(phi, &curv, label)
    }

    /// Curvature from second differences (one-sided at the ends).
    pub fn from_potential(phi: GridFunction, label: impl Into<String>) -> Result<Self> {
        let v = phi.values();
        let h = phi.grid().h();
        let n = v.len();
        let mut curv: Vec<f64> = (1..n - 1).map(|i| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h)).collect();
        curv.insert(0, curv[0]);
        curv.push(curv[curv.len() - 1]);
        Self::with_curvature(phi, &curv, label.into())
    }

    fn with_curvature(phi: GridFunction, curv: &[f64], label: String) -> Result<Self> {
        if phi.left_slope() != 0.0 || phi.right_slope() != 1.0 {
            return Err(Error::InvalidModel(format!(
                "ambient metric needs slopes (0, 1), got ({}, {})",
                phi.left_slope(),
                phi.right_slope()
            )));
        }
        if let Some((index, &value)) = curv.iter().enumerate().find(|(_, c)| !(**c > 0.0)) {
            return Err(Error::NotKahler { index, value });
        }
        let grid = *phi.grid();
        let log_curvature = GridFunction::from_values(grid, curv.iter().map(|c| c.ln()).collect(), 1.0, -1.0)?;
        Ok(Self {
            phi: ConvexPotential::new(phi)?,
            log_curvature,
            label,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    pub fn phi(&self) -> &ConvexPotential {
        &self.phi
    }

    pub fn log_curvature(&self) -> &GridFunction {
        &self.log_curvature
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientKernel {
    pub p: u32,
    pub log_norms: Vec<f64>,
    /// `log K_p` on the grid.
    pub log_diagonal: Vec<f64>,
    metric: AmbientMetric,
}

pub fn ambient_kernel(p: u32, metric: &AmbientMetric) -> Result<AmbientKernel> {
    if p == 0 {
        return Err(Error::InvalidArgument("kernel power p must be positive".into()));
    }
    let w = metric.phi.as_function().scaled(p as f64);
    let log_norms = (0..=p)
        .into_par_iter()
        .map(|j| log_weighted_integral(j as f64, &w, Some(&metric.log_curvature)))
        .collect::<Result<Vec<_>>>()?;
    let grid = *metric.grid();
    let wv = w.values();
    let log_diagonal = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let s = grid.node(i);
            let terms: Vec<f64> = log_norms.iter().enumerate().map(|(j, g)| j as f64 * s - g).collect();
            log_sum_exp(&terms) - wv[i]
        })
        .collect();
    Ok(AmbientKernel {
        p,
        log_norms,
        log_diagonal,
        metric: metric.clone(),
    })
}

impl AmbientKernel {
    pub fn dim(&self) -> usize {
        self.log_norms.len()
    }

    pub fn metric(&self) -> &AmbientMetric {
        &self.metric
    }

    /// `K_p` on the grid.
    pub fn diagonal(&self) -> Result<GridFunction> {
        GridFunction::from_values(*self.metric.grid(), self.log_diagonal.iter().map(|v| v.exp()).collect(), 0.0, 0.0)
    }

    /// `int K_p omega`, equal to `p + 1` (the trace of the projection).
    pub fn trace(&self) -> f64 {
        let v: Vec<f64> = self
            .log_diagonal
            .iter()
            .zip(self.metric.log_curvature.values())
            .map(|(k, c)| (k + c).exp())
            .collect();
        // Both ends decay like e^{-|s|}: the tail beyond each end equals the end value.
        trapezoid(&v, self.metric.grid().h()) + v[0] + v[v.len() - 1]
    }

    /// `log |K(y, x)|_{op}` for nodes `x = s_i`, `y = s_l` on the positive
    /// real axis: the coefficient sum weighted by `e^{-p(phi(x) + phi(y))/2}`.
    pub fn log_off_diagonal(&self, i: usize, l: usize) -> f64 {
        let grid = self.metric.grid();
        let phi = self.metric.phi.values();
        let mid = 0.5 * (grid.node(i) + grid.node(l));
        let terms: Vec<f64> = self.log_norms.iter().enumerate().map(|(j, g)| j as f64 * mid - g).collect();
        log_sum_exp(&terms) - 0.5 * self.p as f64 * (phi[i] + phi[l])
    }

    /// Same with `y` rotated by angle `theta`: `|sum_j c_j e^{i j theta}|`.
    pub fn log_off_diagonal_phase(&self, i: usize, l: usize, theta: f64) -> f64 {
        let grid = self.metric.grid();
        let phi = self.metric.phi.values();
        let mid = 0.5 * (grid.node(i) + grid.node(l));
        let terms: Vec<f64> = self.log_norms.iter().enumerate().map(|(j, g)| j as f64 * mid - g).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: Complex64 = terms
            .iter()
            .enumerate()
            .map(|(j, t)| Complex64::from_polar((t - top).exp(), j as f64 * theta))
            .sum();
        z.norm().ln() + top - 0.5 * self.p as f64 * (phi[i] + phi[l])
    }

    /// `log(|K(y,x)| / sqrt(K_p(x) K_p(y)))`; Cauchy-Schwarz says it is `<= 0`.
    pub fn log_correlation(&self, i: usize, l: usize) -> f64 {
        self.log_off_diagonal(i, l) - 0.5 * (self.log_diagonal[i] + self.log_diagonal[l])
    }
}

/// Per-node least-squares fit of `K_p = p b_0 + b_1 + b_2 / p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionFit {
    pub p_list: Vec<u32>,
    pub b0: GridFunction,
    pub b1: GridFunction,
    /// `max |K_p - fit|` over nodes and p.
    pub residual: f64,
    pub condition_number: f64,
}

impl ExpansionFit {
    pub fn b0_error(&self) -> f64 {
        self.b0.values().iter().fold(0.0_f64, |m, b| m.max((b - 1.0).abs()))
    }

    /// `osc(b_1)`: zero when the fitted scalar curvature is constant.
    pub fn b1_oscillation(&self) -> f64 {
        self.b1.osc()
    }
}

/// Largest condition number accepted by [`expansion_fit`].
pub const MAX_CONDITION: f64 = 1e8;

pub fn expansion_fit(metric: &AmbientMetric, p_list: &[u32]) -> Result<ExpansionFit> {
    if p_list.len() < 3 || p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("expansion fit needs at least three increasing powers".into()));
    }
    if *p_list.last().unwrap() < 64 {
        return Err(Error::InvalidArgument("expansion fit needs max p >= 64".into()));
    }
    let design = DMatrix::from_fn(p_list.len(), 3, |r, c| {
        let p = p_list[r] as f64;
        [p, 1.0, 1.0 / p][c]
    });
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let kernels = p_list
        .iter()
        .map(|&p| ambient_kernel(p, metric))
        .collect::<Result<Vec<_>>>()?;
    let grid = *metric.grid();
    let n = grid.len();
    let mut b0 = vec![0.0; n];
    let mut b1 = vec![0.0; n];
    let mut residual = 0.0_f64;
    for i in 0..n {
        let rhs = DVector::from_iterator(p_list.len(), kernels.iter().map(|k| k.log_diagonal[i].exp()));
        let coef = svd.solve(&rhs, 0.0).map_err(|e| Error::InvalidArgument(e.into()))?;
        b0[i] = coef[0];
        b1[i] = coef[1];
        let fit = &design * &coef;
        residual = residual.max((fit - rhs).amax());
    }
    Ok(ExpansionFit {
        p_list: p_list.to_vec(),
        b0: GridFunction::from_values(grid, b0, 0.0, 0.0)?,
        b1: GridFunction::from_values(grid, b1, 0.0, 0.0)?,
        residual,
        condition_number: cond,
    })
}

/// `sup_y |a(y)|` for the optimal extension `a = K_p(., x) v / K_p(x)` with
/// `|v| = 1` and `x` the grid node nearest `s_x`. The supremum over `P^1`
/// is attained on the positive real axis since all coefficients are
/// positive; [`phase_excess`] spot-checks that.
pub fn peak_extension(kernel: &AmbientKernel, s_x: f64) -> f64 {
    let grid = kernel.metric.grid();
    let i = grid.nearest(s_x);
    let top = (0..grid.len())
        .into_par_iter()
        .map(|l| kernel.log_off_diagonal(i, l))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    (top - kernel.log_diagonal[i]).exp()
}

/// Largest excess of `|a(y e^{i theta})|` over the real-axis supremum, over
/// the given phases and every grid `y`.
pub fn phase_excess(kernel: &AmbientKernel, s_x: f64, phases: &[f64]) -> f64 {
    let grid = kernel.metric.grid();
    let i = grid.nearest(s_x);
    let real = peak_extension(kernel, s_x);
    phases
        .par_iter()
        .map(|&theta| {
            (0..grid.len())
                .map(|l| (kernel.log_off_diagonal_phase(i, l, theta) - kernel.log_diagonal[i]).exp())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        - real
}

/// Largest `|K(y,x)| / sqrt(K_p(x) K_p(y)) - 1` over node pairs.
pub fn cauchy_schwarz_excess(kernel: &AmbientKernel, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(i, l)| kernel.log_correlation(i, l).exp_m1())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(p, max over scan of (sup_ratio - 1) p)` for each power.
pub fn peak_constants(metric: &AmbientMetric, p_list: &[u32], scan: &[f64]) -> Result<Vec<(u32, f64)>> {
    p_list
        .iter()
        .map(|&p| {
            let k = ambient_kernel(p, metric)?;
            let worst = scan
                .iter()
                .map(|&s| (peak_extension(&k, s) - 1.0) * p as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((p, worst))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs() -> AmbientMetric {
        AmbientMetric::fubini_study(Grid::default()).unwrap()
    }

    #[test]
    fn fs_p1_norms_are_half_and_kernel_is_two() {
        let k = ambient_kernel(1, &fs()).unwrap();
        for g in &k.log_norms {
            assert!((g - 0.5_f64.ln()).abs() < 1e-12, "{g}");
        }
        for v in &k.log_diagonal {
            assert!((v.exp() - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fs_kernel_is_balanced() {
        for p in [8, 32, 128] {
            let k = ambient_kernel(p, &fs()).unwrap();
            let want = (p + 1) as f64;
            for v in &k.log_diagonal {
                assert!((v.exp() / want - 1.0).abs() < 1e-8);
            }
            assert!((k.trace() / want - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn perturbed_trace_is_rank() {
        let m = AmbientMetric::perturbed_fs(Grid::default(), 0.05).unwrap();
        for p in [4, 16, 64] {
            let k = ambient_kernel(p, &m).unwrap();
            assert!((k.trace() / (p + 1) as f64 - 1.0).abs() < 1e-8, "{}", k.trace());
        }
    }

    #[test]
    fn non_kahler_metric_rejected() {
        let grid = Grid::default();
        let phi = GridFunction::from_fn(grid, |s| softplus(s) + 0.6 * sech(s), 0.0, 1.0).unwrap();
        assert!(matches!(
            AmbientMetric::from_potential(phi, "bad"),
            Err(Error::NotKahler { .. } | Error::NotConvex { .. })
        ));
    }

    #[test]
    fn fs_expansion_is_exact() {
        let fit = expansion_fit(&fs(), &[16, 32, 64, 128]).unwrap();
        assert!(fit.b0_error() < 1e-6);
        assert!(fit.b1.values().iter().all(|b| (b - 1.0).abs() < 1e-6));
    }

    #[test]
    fn fit_needs_large_powers() {
        assert!(expansion_fit(&fs(), &[4, 8, 16]).is_err());
        assert!(expansion_fit(&fs(), &[64, 128]).is_err());
    }

    #[test]
    fn fs_peak_sections_do_not_overshoot() {
        let k = ambient_kernel(32, &fs()).unwrap();
        for s in [-5.0, 0.0, 0.7, 4.0] {
            assert!((peak_extension(&k, s) - 1.0).abs() < 1e-8);
        }
        assert!(phase_excess(&k, 0.7, &[0.3, 1.0, 2.5]) <= 1e-8);
    }

    #[test]
    fn kernel_cauchy_schwarz() {
        let m = AmbientMetric::perturbed_fs(Grid::default(), 0.05).unwrap();
        let k = ambient_kernel(16, &m).unwrap();
        let pairs: Vec<(usize, usize)> = (0..40).map(|a| (a * 97 % 4001, a * 389 % 4001)).collect();
        assert!(cauchy_schwarz_excess(&k, &pairs) <= 1e-10);
    }
}
