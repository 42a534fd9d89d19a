//! Uniform grids in the log-radial coordinate `s = log|z|^2` and the
//! functions sampled on them.
//!
//! A [`GridFunction`] is a finite sample vector together with two declared
//! asymptotic slopes; outside `[s_min, s_max]` it is extended affinely with
//! those slopes. Every potential, weight and density in the crate is carried
//! by one.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Default `[s_min, s_max]` and node count.
pub const DEFAULT_S_MIN: f64 = -30.0;
pub const DEFAULT_S_MAX: f64 = 30.0;
pub const DEFAULT_NODES: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    s_min: f64,
    s_max: f64,
    n_nodes: usize,
}

impl Grid {
    pub fn new(s_min: f64, s_max: f64, n_nodes: usize) -> Result<Self> {
        if !(s_min.is_finite() && s_max.is_finite()) || s_min >= s_max {
            return Err(Error::InvalidGrid(format!(
                "need finite s_min < s_max, got [{s_min}, {s_max}]"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {n_nodes}"
            )));
        }
        Ok(Self {
            s_min,
            s_max,
            n_nodes,
        })
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing.
    pub fn h(&self) -> f64 {
        (self.s_max - self.s_min) / (self.n_nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_nodes {
            self.s_max
        } else {
            self.s_min + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.node(i))
    }

    /// Index of the node closest to `s`, clamped to the grid.
    pub fn nearest(&self, s: f64) -> usize {
        let x = ((s - self.s_min) / self.h()).round();
        x.clamp(0.0, (self.n_nodes - 1) as f64) as usize
    }

    /// Same interval with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            s_min: self.s_min,
            s_max: self.s_max,
            n_nodes: (self.n_nodes - 1) * factor.max(1) + 1,
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            s_min: DEFAULT_S_MIN,
            s_max: DEFAULT_S_MAX,
            n_nodes: DEFAULT_NODES,
        }
    }
}

/// Default boundary-consistency tolerance for declared slopes.
pub fn default_slope_tol(left: f64, right: f64) -> f64 {
    1e-6 * (1.0 + (right - left).abs())
}

/// Default discrete-convexity tolerance for a sample vector.
pub fn default_conv_tol(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + 1.0;
    1e-10 * scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
    slopes_inconsistent: bool,
}

impl GridFunction {
    /// Wraps node values. Non-finite entries are rejected; declared slopes
    /// that disagree with the boundary differences only raise a flag.
    pub fn from_values(grid: Grid, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                index,
                s: grid.node(index),
            });
        }
        if !(left_slope.is_finite() && right_slope.is_finite()) {
            return Err(Error::SlopeWindow(format!(
                "declared slopes must be finite, got ({left_slope}, {right_slope})"
            )));
        }
        let mut f = Self {
            grid,
            values,
            left_slope,
            right_slope,
            slopes_inconsistent: false,
        };
        f.slopes_inconsistent = !f.boundary_consistent(default_slope_tol(left_slope, right_slope));
        Ok(f)
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64, left_slope: f64, right_slope: f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::from_values(grid, values, left_slope, right_slope)
    }

    /// Builds a function from scattered `(s, value)` samples (sorted by `s`),
    /// interpolating linearly between them and extending with the declared
    /// slopes beyond the first and last sample.
    pub fn from_samples(grid: Grid, samples: &[(f64, f64)], left_slope: f64, right_slope: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        if let Some(index) = samples.iter().position(|(s, v)| !s.is_finite() || !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                index,
                s: samples[index].0,
            });
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("samples must be strictly increasing in s".into()));
        }
        let (first, last) = (samples[0], samples[samples.len() - 1]);
        let mut j = 0;
        let values = grid
            .nodes()
            .map(|s| {
                if s <= first.0 {
                    first.1 + left_slope * (s - first.0)
                } else if s >= last.0 {
                    last.1 + right_slope * (s - last.0)
                } else {
                    while samples[j + 1].0 < s {
                        j += 1;
                    }
                    let (s0, v0) = samples[j];
                    let (s1, v1) = samples[j + 1];
                    v0 + (v1 - v0) * (s - s0) / (s1 - s0)
                }
            })
            .collect();
        Self::from_values(grid, values, left_slope, right_slope)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
            left_slope: 0.0,
            right_slope: 0.0,
            slopes_inconsistent: false,
        }
    }

    pub fn zero(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    /// True when the declared slopes disagree with the boundary differences.
    pub fn is_flagged(&self) -> bool {
        self.slopes_inconsistent
    }

    pub fn boundary_consistent(&self, slope_tol: f64) -> bool {
        let (first, last) = self.boundary_differences();
        (first - self.left_slope).abs() <= slope_tol && (last - self.right_slope).abs() <= slope_tol
    }

    /// Forward difference at `s_min` and backward difference at `s_max`.
    pub fn boundary_differences(&self) -> (f64, f64) {
        let h = self.grid.h();
        let v = &self.values;
        let n = v.len();
        ((v[1] - v[0]) / h, (v[n - 1] - v[n - 2]) / h)
    }

    pub fn is_bounded(&self) -> bool {
        self.left_slope == 0.0 && self.right_slope == 0.0
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Oscillation `max - min` over the nodes.
    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Value at an arbitrary `s`: linear between nodes, affine tails outside.
    pub fn eval(&self, s: f64) -> f64 {
        let g = &self.grid;
        let n = self.values.len();
        if s <= g.s_min() {
            return self.values[0] + self.left_slope * (s - g.s_min());
        }
        if s >= g.s_max() {
            return self.values[n - 1] + self.right_slope * (s - g.s_max());
        }
        let x = (s - g.s_min()) / g.h();
        let i = (x.floor() as usize).min(n - 2);
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Applies `f` to every value; the slopes are supplied by the caller.
    pub fn map(&self, f: impl Fn(f64) -> f64, left_slope: f64, right_slope: f64) -> Result<Self> {
        Self::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect(), left_slope, right_slope)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.left_slope *= c;
        out.right_slope *= c;
        out
    }

    /// `a*self + b*other`, slopes combined linearly.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
            left_slope: a * self.left_slope + b * other.left_slope,
            right_slope: a * self.right_slope + b * other.right_slope,
            slopes_inconsistent: self.slopes_inconsistent || other.slopes_inconsistent,
        })
    }

    /// Pointwise minimum; the tail slopes are the smaller of the two.
    pub fn pointwise_min(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x.min(*y))
            .collect();
        Self::from_values(
            self.grid,
            values,
            self.left_slope.max(other.left_slope),
            self.right_slope.min(other.right_slope),
        )
    }

    /// Sets a single node value (used by perturbation probes).
    pub fn with_value(&self, i: usize, v: f64) -> Self {
        let mut out = self.clone();
        out.values[i] = v;
        out
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;

    /// Panics on grid mismatch; use [`GridFunction::combine`] for a fallible sum.
    fn add(self, rhs: Self) -> GridFunction {
        self.combine(1.0, rhs, 1.0).expect("grid mismatch in addition")
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;

    fn sub(self, rhs: Self) -> GridFunction {
        self.combine(1.0, rhs, -1.0).expect("grid mismatch in subtraction")
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;

    fn mul(self, rhs: f64) -> GridFunction {
        self.scaled(rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;

    fn neg(self) -> GridFunction {
        self.scaled(-1.0)
    }
}

/// A grid function whose node values are discretely convex and whose
/// boundary differences lie inside the declared slope window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPotential(GridFunction);

impl ConvexPotential {
    pub fn new(f: GridFunction) -> Result<Self> {
        let tol = default_conv_tol(f.values());
        Self::with_tolerance(f, tol)
    }

    pub fn with_tolerance(f: GridFunction, conv_tol: f64) -> Result<Self> {
        check_convex(&f, conv_tol)?;
        Ok(Self(f))
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.0
    }

    pub fn into_function(self) -> GridFunction {
        self.0
    }

    pub fn conv_tol(&self) -> f64 {
        default_conv_tol(self.0.values())
    }
}

impl std::ops::Deref for ConvexPotential {
    type Target = GridFunction;

    fn deref(&self) -> &GridFunction {
        &self.0
    }
}

pub(crate) fn check_convex(f: &GridFunction, conv_tol: f64) -> Result<()> {
    let v = f.values();
    for i in 1..v.len() - 1 {
        let d2 = v[i + 1] - 2.0 * v[i] + v[i - 1];
        if d2 < -conv_tol {
            return Err(Error::NotConvex {
                index: i,
                value: d2,
                tol: conv_tol,
            });
        }
    }
    let (first, last) = f.boundary_differences();
    let h = f.grid().h();
    let slack = conv_tol / h;
    if f.left_slope() > first + slack {
        return Err(Error::SlopeWindow(format!(
            "left slope {} exceeds first difference {first}",
            f.left_slope()
        )));
    }
    if last > f.right_slope() + slack {
        return Err(Error::SlopeWindow(format!(
            "last difference {last} exceeds right slope {}",
            f.right_slope()
        )));
    }
    Ok(())
}

/// Uniform grid on a moment interval `[xi_min, xi_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualGrid {
    xi_min: f64,
    xi_max: f64,
    m_nodes: usize,
}

impl DualGrid {
    pub fn new(xi_min: f64, xi_max: f64, m_nodes: usize) -> Result<Self> {
        if !(xi_min.is_finite() && xi_max.is_finite()) || xi_min >= xi_max || m_nodes < 2 {
            return Err(Error::InvalidGrid(format!(
                "dual grid [{xi_min}, {xi_max}] with {m_nodes} nodes"
            )));
        }
        Ok(Self {
            xi_min,
            xi_max,
            m_nodes,
        })
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn len(&self) -> usize {
        self.m_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.xi_max - self.xi_min) / (self.m_nodes - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j + 1 == self.m_nodes {
            self.xi_max
        } else {
            self.xi_min + j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.m_nodes).map(move |j| self.node(j))
    }
}

/// Legendre-dual (symplectic) potential on a [`DualGrid`]. Endpoint nodes may
/// hold `+inf` where the transform diverges; interior nodes are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGridFunction {
    grid: DualGrid,
    values: Vec<f64>,
}

impl DualGridFunction {
    pub fn new(grid: DualGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let m = values.len();
        for (j, v) in values.iter().enumerate() {
            let endpoint = j == 0 || j + 1 == m;
            if v.is_nan() || (*v == f64::NEG_INFINITY) || (v.is_infinite() && !endpoint) {
                return Err(Error::DualDivergence {
                    index: j,
                    xi: grid.node(j),
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &DualGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when node `j` carries the divergence marker.
    pub fn is_infinite_at(&self, j: usize) -> bool {
        self.values[j].is_infinite()
    }

    /// `(1-t)*self + t*other` on a shared dual grid.
    pub fn interpolate(&self, other: &Self, t: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                if a.is_infinite() || b.is_infinite() {
                    f64::INFINITY
                } else {
                    (1.0 - t) * a + t * b
                }
            })
            .collect();
        Self::new(self.grid, values)
    }

    /// Smallest undivided second difference over consecutive finite nodes.
    pub fn min_second_difference(&self) -> f64 {
        self.values
            .windows(3)
            .filter(|w| w.iter().all(|v| v.is_finite()))
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid integral over the finite nodes.
    pub fn integral(&self) -> f64 {
        let step = self.grid.step();
        let mut acc = super::quadrature::Compensated::default();
        for w in self.values.windows(2) {
            if w[0].is_finite() && w[1].is_finite() {
                acc.add(0.5 * step * (w[0] + w[1]));
            }
        }
        acc.total()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_exact() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.h(), 0.5);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(1.0, 1.0, 10).is_err());
        assert!(Grid::new(0.0, 1.0, 2).is_err());
        assert!(Grid::new(f64::NAN, 1.0, 10).is_err());
    }

    #[test]
    fn zero_function() {
        let g = Grid::default();
        let f = GridFunction::from_fn(g, |_| 0.0, 0.0, 0.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
        assert!(!f.is_flagged());
    }

    #[test]
    fn fubini_study_passes_boundary_check() {
        let g = Grid::default();
        let f = GridFunction::from_fn(g, crate::families::softplus, 0.0, 1.0).unwrap();
        assert!(!f.is_flagged());
        assert!(ConvexPotential::new(f).is_ok());
    }

    #[test]
    fn contradictory_slopes_are_flagged_not_rejected() {
        let g = Grid::default();
        let f = GridFunction::from_fn(g, |s| s, 0.0, 0.0).unwrap();
        assert!(f.is_flagged());
    }

    #[test]
    fn non_finite_sample_reports_node() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        let err = GridFunction::from_fn(g, |s| if s == 0.5 { f64::NAN } else { 0.0 }, 0.0, 0.0).unwrap_err();
        assert_eq!(err, Error::NonFiniteSample { index: 3, s: 0.5 });
    }

    #[test]
    fn scattered_samples_interpolate() {
        let g = Grid::new(-2.0, 2.0, 5).unwrap();
        let f = GridFunction::from_samples(g, &[(-1.0, 0.0), (1.0, 2.0)], 0.0, 1.0).unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn eval_uses_affine_tails() {
        let g = Grid::new(0.0, 1.0, 3).unwrap();
        let f = GridFunction::from_values(g, vec![0.0, 0.5, 1.5], -1.0, 2.0).unwrap();
        assert_eq!(f.eval(-1.0), 1.0);
        assert_eq!(f.eval(2.0), 3.5);
        assert!((f.eval(0.75) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convexity_check_rejects_concave() {
        let g = Grid::new(-1.0, 1.0, 11).unwrap();
        let f = GridFunction::from_fn(g, |s| -s * s, 2.0, -2.0).unwrap();
        assert!(matches!(ConvexPotential::new(f), Err(Error::NotConvex { .. })));
    }
}
