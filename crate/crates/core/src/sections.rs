//! The quantized side: Hilbert forms on adjoint sections, the quantized
//! energy `E_k` and Bergman densities.
//!
//! Sections of `O(dk + m - 2)` are spanned by the monomials `z^j`. For radial
//! weights they are mutually orthogonal, so the Gram matrix is diagonal with
//!
//! ```text
//! G_j = pi * int exp((j + 1) s - k (Phi_0 + u)(s) - m phi_FS(s)) ds
//! ```
//!
//! and every determinant is a sum of `log G_j`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::families::fubini_study;
use crate::pluripotential::PolarizedModel;
use crate::radial::quadrature::{log_sum_exp, log_weighted_integral, sum, Compensated};
use crate::radial::GridFunction;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Adjoint sections of `L^k (x) A^m`, `A = O(1)` with the Fubini-Study metric.
#[derive(Debug, Clone)]
pub struct SectionSpace<'a> {
    model: &'a PolarizedModel,
    k: u32,
    m: u32,
    twist: GridFunction,
    reference: Vec<f64>,
}

impl<'a> SectionSpace<'a> {
    /// Requires `d*k + m >= 2`; caches the reference form `Hilb_k(0)`.
    pub fn new(model: &'a PolarizedModel, k: u32, m: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("tensor power k must be positive".into()));
        }
        let degree = model.d() as i64 * k as i64 + m as i64;
        if degree < 2 {
            return Err(Error::NoSections(degree));
        }
        let mut space = Self {
            model,
            k,
            m,
            twist: fubini_study(*model.grid(), 1.0),
            reference: Vec::new(),
        };
        let zero = GridFunction::zero(*model.grid());
        space.reference = space.log_norms(&zero)?;
        Ok(space)
    }

    pub fn model(&self) -> &'a PolarizedModel {
        self.model
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// `N = d*k + m - 1`.
    pub fn dim(&self) -> usize {
        (self.model.d() * self.k + self.m - 1) as usize
    }

    pub fn exponents(&self) -> std::ops::Range<usize> {
        0..self.dim()
    }

    /// `log G_j(0)`.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// `W = k (Phi_0 + u) + m phi_FS`, slopes `(0, dk + m)`.
    pub fn exponent_weight(&self, u: &GridFunction) -> Result<GridFunction> {
        if !u.is_bounded() {
            return Err(Error::Unbounded {
                left: u.left_slope(),
                right: u.right_slope(),
            });
        }
        let k = self.k as f64;
        self.model
            .potential(u)?
            .combine(k, &self.twist, self.m as f64)
    }

    fn log_norms(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let w = self.exponent_weight(u)?;
        (0..self.dim())
            .into_par_iter()
            .map(|j| log_weighted_integral(j as f64 + 1.0, &w, None).map(|v| v + LN_PI))
            .collect()
    }
}

/// Diagonal of `Hilb_k(u)`: `log G_j` for `j = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertForm {
    pub k: u32,
    pub m: u32,
    pub log_norms: Vec<f64>,
}

impl HilbertForm {
    pub fn dim(&self) -> usize {
        self.log_norms.len()
    }
}

pub fn section_space(model: &PolarizedModel, k: u32, m: u32) -> Result<SectionSpace<'_>> {
    SectionSpace::new(model, k, m)
}

pub fn hilbert_form(space: &SectionSpace<'_>, u: &GridFunction) -> Result<HilbertForm> {
    Ok(HilbertForm {
        k: space.k,
        m: space.m,
        log_norms: space.log_norms(u)?,
    })
}

/// `E_k(u) = -(1/(kN)) sum_j (log G_j(u) - log G_j(0))`.
pub fn quantized_energy(space: &SectionSpace<'_>, u: &GridFunction) -> Result<f64> {
    let h = hilbert_form(space, u)?;
    Ok(energy_between(space, &h.log_norms, &space.reference))
}

/// `E_k` measured from an arbitrary reference form instead of `Hilb_k(0)`.
pub fn quantized_energy_relative(space: &SectionSpace<'_>, u: &GridFunction, reference: &HilbertForm) -> Result<f64> {
    let h = hilbert_form(space, u)?;
    Ok(energy_between(space, &h.log_norms, &reference.log_norms))
}

fn energy_between(space: &SectionSpace<'_>, a: &[f64], b: &[f64]) -> f64 {
    let n = space.dim() as f64;
    -sum(a.iter().zip(b).map(|(x, y)| x - y)) / (space.k as f64 * n)
}

/// Pushforward of the Bergman measure to the `s`-line.
#[derive(Debug, Clone, PartialEq)]
pub struct BergmanDensity {
    pub k: u32,
    pub m: u32,
    pub dim: usize,
    pub normalized: bool,
    /// `log p`, slopes `(1, -1)`.
    pub log_density: GridFunction,
    pub density: GridFunction,
    /// Quadrature mass of `p` (N, or 1 when normalized).
    pub mass: f64,
}

impl BergmanDensity {
    /// `int f p ds`: trapezoid on the grid, `f` frozen at the boundary values
    /// on the exponentially decaying tails.
    pub fn pair(&self, f: &GridFunction) -> Result<f64> {
        self.density.check_same_grid(f)?;
        let p = self.density.values();
        let fv = f.values();
        let h = self.density.grid().h();
        let n = p.len();
        let mut acc = Compensated::default();
        for i in 0..n {
            let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
            acc.add(w * fv[i] * p[i]);
        }
        acc.add(fv[0] * p[0]);
        acc.add(fv[n - 1] * p[n - 1]);
        Ok(acc.total())
    }

    /// Mass below each node: cumulative trapezoid with endpoint correction.
    pub fn cdf(&self) -> Vec<f64> {
        let p = self.density.values();
        crate::radial::quadrature::cumulative(p, self.density.grid().h(), p[0])
    }
}

/// `log p(s_i)` at every node, `p = sum_j pi exp((j+1)s - W)/G_j`.
fn log_density_values(w: &GridFunction, log_norms: &[f64]) -> Vec<f64> {
    let grid = *w.grid();
    let wv = w.values();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let s = grid.node(i);
            let terms: Vec<f64> = log_norms
                .iter()
                .enumerate()
                .map(|(j, g)| (j as f64 + 1.0) * s - g)
                .collect();
            LN_PI + log_sum_exp(&terms) - wv[i]
        })
        .collect()
}

pub fn bergman_density(space: &SectionSpace<'_>, u: &GridFunction, normalized: bool) -> Result<BergmanDensity> {
    let hf = hilbert_form(space, u)?;
    let w = space.exponent_weight(u)?;
    let mut logp = log_density_values(&w, &hf.log_norms);
    let n = space.dim() as f64;
    let grid = *w.grid();
    let log_p = GridFunction::from_values(grid, logp.clone(), 1.0, -1.0)?;
    let mass = log_weighted_integral(0.0, &GridFunction::zero(grid), Some(&log_p))?.exp();
    let rel = (mass - n).abs() / n;
    if rel > 1e-6 {
        return Err(Error::QuadratureResolution { mass, expected: n, rel });
    }
    let mut mass = mass;
    if normalized {
        let ln_n = n.ln();
        logp.iter_mut().for_each(|v| *v -= ln_n);
        mass /= n;
    }
    let density = GridFunction::from_values(grid, logp.iter().map(|v| v.exp()).collect(), 0.0, 0.0)?;
    Ok(BergmanDensity {
        k: space.k,
        m: space.m,
        dim: space.dim(),
        normalized,
        log_density: GridFunction::from_values(grid, logp, 1.0, -1.0)?,
        density,
        mass,
    })
}

/// `log p(s)` at an arbitrary point, with `W` interpolated.
pub fn log_density_at(space: &SectionSpace<'_>, hf: &HilbertForm, u: &GridFunction, s: f64) -> Result<f64> {
    let w = space.exponent_weight(u)?.eval(s);
    let terms: Vec<f64> = hf
        .log_norms
        .iter()
        .enumerate()
        .map(|(j, g)| (j as f64 + 1.0) * s - g)
        .collect();
    Ok(LN_PI + log_sum_exp(&terms) - w)
}

/// `|sigma(x)|^2 e^{-W} / ||sigma||^2` for `sigma = sum_j c_j z^j`, with `x`
/// on the positive real axis at `s_point`. By Cauchy-Schwarz it never exceeds
/// the unnormalized Bergman density there.
pub fn extremal_ratio(space: &SectionSpace<'_>, u: &GridFunction, coefficients: &[Complex64], s_point: f64) -> Result<f64> {
    if coefficients.len() != space.dim() {
        return Err(Error::LengthMismatch {
            expected: space.dim(),
            got: coefficients.len(),
        });
    }
    if coefficients.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroCoefficients);
    }
    let hf = hilbert_form(space, u)?;
    let w = space.exponent_weight(u)?.eval(s_point);
    // Evaluate sum c_j e^{j s/2} with a common scale to avoid overflow.
    let logs: Vec<f64> = coefficients
        .iter()
        .enumerate()
        .map(|(j, c)| c.norm().ln() + 0.5 * j as f64 * s_point)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value: Complex64 = coefficients
        .iter()
        .zip(&logs)
        .filter(|(c, _)| c.norm() > 0.0)
        .map(|(c, l)| (c / c.norm()) * (l - top).exp())
        .sum();
    let log_num = 2.0 * (top + value.norm().ln()) + LN_PI + s_point - w;
    let den: Vec<f64> = coefficients
        .iter()
        .zip(&hf.log_norms)
        .map(|(c, g)| 2.0 * c.norm().ln() + g)
        .collect();
    Ok((log_num - log_sum_exp(&den)).exp())
}

/// The Cauchy-Schwarz equalizer `c_j ~ e^{j s/2} / G_j`, scaled so the
/// largest coefficient is 1.
pub fn equalizer(hf: &HilbertForm, s_point: f64) -> Vec<Complex64> {
    let logs: Vec<f64> = hf
        .log_norms
        .iter()
        .enumerate()
        .map(|(j, g)| 0.5 * j as f64 * s_point - g)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| Complex64::new((l - top).exp(), 0.0)).collect()
}

/// Normalized off-diagonal Gram entry `|G_ij| / sqrt(G_ii G_jj)` computed by
/// a tensor quadrature over `(s, angle)` with `n_phase` angles. Zero for
/// radial weights; exposed as a spot check of diagonality.
pub fn gram_cross_term(space: &SectionSpace<'_>, u: &GridFunction, i: usize, j: usize, n_phase: usize) -> Result<f64> {
    let n = space.dim();
    if i >= n || j >= n || n_phase == 0 {
        return Err(Error::InvalidArgument(format!("bad cross-term request ({i}, {j}) with {n_phase} phases")));
    }
    let w = space.exponent_weight(u)?;
    let hf = hilbert_form(space, u)?;
    let a = 0.5 * (i + j) as f64 + 1.0;
    let radial = log_weighted_integral(a, &w, None)? + LN_PI;
    let mut angular = Complex64::new(0.0, 0.0);
    for q in 0..n_phase {
        let theta = 2.0 * std::f64::consts::PI * q as f64 / n_phase as f64;
        angular += Complex64::from_polar(1.0, (i as f64 - j as f64) * theta);
    }
    angular /= n_phase as f64;
    let log_diag = 0.5 * (hf.log_norms[i] + hf.log_norms[j]);
    Ok(angular.norm() * (radial - log_diag).exp())
}
