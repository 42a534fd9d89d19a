//! Overflow-safe integration of `exp(a*s - W(s) + l(s))` over the whole line.
//!
//! The grid part uses the trapezoid rule after subtracting the largest
//! exponent; beyond the grid the exponent is affine and the tails are
//! integrated in closed form.

use crate::error::{Error, Result, Tail};

use super::grid::GridFunction;

/// Neumaier (improved Kahan) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum in index order.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// `log(sum(exp(x)))`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + sum(xs.iter().map(|x| (x - m).exp())).ln()
}

/// `log( integral of exp(a*s - W(s) + l(s)) ds )` over the real line, where
/// `l` is an optional log-density.
///
/// Outside the grid the exponent is affine with slope
/// `a - a-(W) + a-(l)` on the left and `a - a+(W) + a+(l)` on the right; the
/// left one must be positive and the right one negative.
pub fn log_weighted_integral(a: f64, w: &GridFunction, log_density: Option<&GridFunction>) -> Result<f64> {
    if let Some(l) = log_density {
        w.check_same_grid(l)?;
    }
    let (dl, dr) = log_density.map_or((0.0, 0.0), |l| (l.left_slope(), l.right_slope()));
    let left = a - w.left_slope() + dl;
    let right = a - w.right_slope() + dr;
    if !(left > 0.0) {
        return Err(Error::Integrability {
            tail: Tail::Left,
            slope: left,
        });
    }
    if !(right < 0.0) {
        return Err(Error::Integrability {
            tail: Tail::Right,
            slope: right,
        });
    }
    let grid = w.grid();
    let wv = w.values();
    let exponent = |i: usize| {
        let base = a * grid.node(i) - wv[i];
        match log_density {
            Some(l) => base + l.values()[i],
            None => base,
        }
    };
    let n = grid.len();
    let peak = (0..n).map(exponent).fold(f64::NEG_INFINITY, f64::max);
    let h = grid.h();
    let mut acc = Compensated::default();
    for i in 0..n {
        let weight = if i == 0 || i + 1 == n { 0.5 * h } else { h };
        acc.add(weight * (exponent(i) - peak).exp());
    }
    acc.add((exponent(0) - peak).exp() / left);
    acc.add((exponent(n - 1) - peak).exp() / -right);
    Ok(peak + acc.total().ln())
}

/// Mass of a non-negative density sampled on a grid (trapezoid rule).
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let mut acc = Compensated::default();
    for (i, v) in values.iter().enumerate() {
        let weight = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        acc.add(weight * h * v);
    }
    acc.total()
}

/// First derivative at every node: fourth-order centered differences in the
/// interior, falling back to second order and then one-sided at the ends.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (values[i + 1] - values[i - 1]) / (2.0 * h)
            } else if i == 0 {
                (values[1] - values[0]) / h
            } else {
                (values[n - 1] - values[n - 2]) / h
            }
        })
        .collect()
}

/// Cumulative integral of a smooth density from `-inf` to every node.
///
/// Cumulative trapezoid sums with the Euler-Maclaurin endpoint correction
/// `-h^2/12 (p'(s_i) - p'(s_0))`, plus `left_tail` for the mass below `s_0`.
pub fn cumulative(values: &[f64], h: f64, left_tail: f64) -> Vec<f64> {
    let dp = derivative(values, h);
    let mut acc = Compensated::default();
    acc.add(left_tail);
    let mut out = Vec::with_capacity(values.len());
    out.push(left_tail);
    for i in 1..values.len() {
        acc.add(0.5 * h * (values[i - 1] + values[i]));
        out.push(acc.total() - h * h / 12.0 * (dp[i] - dp[0]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::softplus;
    use crate::radial::grid::Grid;

    fn fs(grid: Grid, a: f64) -> GridFunction {
        GridFunction::from_fn(grid, |s| a * softplus(s), 0.0, a).unwrap()
    }

    fn ln_beta(a: f64, b: f64) -> f64 {
        // Integer arguments only in these tests.
        let lf = |n: f64| (1..=n as u64).map(|i| (i as f64).ln()).sum::<f64>();
        lf(a - 1.0) + lf(b - 1.0) - lf(a + b - 1.0)
    }

    #[test]
    fn logistic_normalization() {
        let v = log_weighted_integral(1.0, &fs(Grid::default(), 2.0), None).unwrap();
        assert!(v.abs() < 1e-13, "{v}");
    }

    #[test]
    fn beta_one_two() {
        let v = log_weighted_integral(1.0, &fs(Grid::default(), 3.0), None).unwrap();
        assert!((v - 0.5_f64.ln()).abs() < 1e-13, "{v}");
    }

    #[test]
    fn beta_integrals_up_to_k_fifty() {
        let grid = Grid::default();
        for k in 2..=50u32 {
            let w = fs(grid, k as f64);
            for j in 0..=(k - 2) {
                let got = log_weighted_integral(j as f64 + 1.0, &w, None).unwrap();
                let want = ln_beta(j as f64 + 1.0, (k - j - 1) as f64);
                let rel = (got - want).exp_m1().abs();
                assert!(rel < 1e-12, "k={k} j={j} rel={rel:e}");
            }
        }
    }

    #[test]
    fn divergent_tail_is_named() {
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let zero = GridFunction::zero(grid);
        let err = log_weighted_integral(0.0, &zero, None).unwrap_err();
        assert_eq!(
            err,
            Error::Integrability {
                tail: Tail::Left,
                slope: 0.0
            }
        );
        let err = log_weighted_integral(1.0, &zero, None).unwrap_err();
        assert!(matches!(err, Error::Integrability { tail: Tail::Right, .. }));
    }

    #[test]
    fn huge_exponents_do_not_overflow() {
        let grid = Grid::default();
        let k = 20_000.0;
        let v = log_weighted_integral(k / 2.0, &fs(grid, k), None).unwrap();
        assert!(v.is_finite());
        // Laplace: integral ~ 2^-k sqrt(8 pi / k)
        let laplace = -k * 2f64.ln() + (8.0 * std::f64::consts::PI / k).sqrt().ln();
        assert!((v - laplace).abs() < 1e-3);
    }

    #[test]
    fn log_density_shifts_integral() {
        let grid = Grid::default();
        let w = fs(grid, 3.0);
        let l = GridFunction::constant(grid, 2.0);
        let plain = log_weighted_integral(1.0, &w, None).unwrap();
        let dens = log_weighted_integral(1.0, &w, Some(&l)).unwrap();
        assert!((dens - plain - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn cumulative_logistic_cdf() {
        let grid = Grid::default();
        let p: Vec<f64> = grid.nodes().map(crate::families::logistic_density).collect();
        let left = crate::families::logistic(grid.s_min());
        let cdf = cumulative(&p, grid.h(), left);
        let err = grid
            .nodes()
            .zip(&cdf)
            .fold(0.0_f64, |m, (s, c)| m.max((c - crate::families::logistic(s)).abs()));
        assert!(err < 1e-10, "{err:e}");
    }
}
