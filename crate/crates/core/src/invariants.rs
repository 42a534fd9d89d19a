//! Self-checks of the structural identities everything else relies on.
//!
//! Each function evaluates one invariant on caller-supplied data and returns
//! a [`Check`] with the measured residual and the tolerance it is held to.
//! Callers choose the inputs (property tests draw them at random, the
//! acceptance sweep uses a fixed seed), so nothing here needs an RNG.

use num_complex::Complex64;

use crate::families::{softplus, SoftMax};
use crate::pluripotential::{envelope, ma_energy, ma_measure};
use crate::radial::legendre::{conjugate_at, primal_at};
use crate::sections::{
    equalizer, extremal_ratio, hilbert_form, log_density_at, quantized_energy, quantized_energy_relative,
};
use crate::{Error, GridFunction, PolarizedModel, Result, SectionSpace, Weight};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub invariant: &'static str,
    pub residual: f64,
    pub tol: f64,
}

impl Check {
    fn new(invariant: &'static str, residual: f64, tol: f64) -> Self {
        Self {
            invariant,
            residual,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.residual <= self.tol
    }
}

/// Parameters of the weight `lambda (lse - Phi_0) + shift`, certified for
/// `lambda` in `[0, 1]` whenever the soft-max has slopes exactly `[0, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub terms: Vec<(f64, f64)>,
    pub tau: f64,
    pub lambda: f64,
    pub shift: f64,
}

impl WeightSpec {
    pub fn build(&self, model: &PolarizedModel) -> Result<Weight> {
        let lse = SoftMax::new(self.terms.clone(), self.tau)?;
        if lse.slopes() != (0.0, model.vol()) {
            return Err(Error::InvalidArgument("soft-max slopes must be exactly [0, d]".into()));
        }
        let phi0 = model.phi0().as_function().values();
        let values = model
            .grid()
            .nodes()
            .zip(phi0)
            .map(|(s, p)| self.lambda * (lse.value(s) - p) + self.shift)
            .collect();
        Weight::new(model, GridFunction::from_values(*model.grid(), values, 0.0, 0.0)?)
    }
}

/// A convex function is recovered from its transform at its own cell slopes.
pub fn legendre_involution(f: &GridFunction) -> Result<Check> {
    let h = f.grid().h();
    let v = f.values();
    let mut xi: Vec<f64> = Vec::with_capacity(v.len() + 1);
    let mut last = f64::NEG_INFINITY;
    let slopes = std::iter::once(f.left_slope())
        .chain(v.windows(2).map(|w| (w[1] - w[0]) / h))
        .chain(std::iter::once(f.right_slope()));
    for x in slopes {
        // Rounding can make neighbouring secants of a tail dip; skip them.
        let x = x.clamp(f.left_slope(), f.right_slope());
        if x > last {
            xi.push(x);
            last = x;
        }
    }
    let g = conjugate_at(f, &xi)?;
    let (back, _) = primal_at(&xi, &g, *f.grid())?;
    let residual = back.as_function().sup_distance(f)?;
    let grid = f.grid();
    let reach = grid.s_min().abs().max(grid.s_max().abs()) * f.left_slope().abs().max(f.right_slope().abs());
    let scale = 1.0 + v.iter().fold(0.0f64, |a, x| a.max(x.abs())) + reach;
    Ok(Check::new("legendre_involution", residual, 1e-13 * scale))
}

/// `P(f) <= f`, `P(f)` is certified, `P(P(f)) = P(f)`, and every certified
/// `v <= f` satisfies `v <= P(f)`.
pub fn envelope_maximality(model: &PolarizedModel, f: &GridFunction, v: &Weight) -> Result<Vec<Check>> {
    let tol = 1e-10 * (1.0 + f.osc() + f.max().abs());
    let (p, _) = envelope(model, f)?;
    let pf = p.function();
    let below = pf.values().iter().zip(f.values()).map(|(p, f)| p - f).fold(0.0f64, f64::max);
    let (pp, _) = envelope(model, pf)?;
    let idem = pp.function().sup_distance(pf)?;
    let above = f.values().iter().zip(v.function().values()).map(|(f, v)| v - f).fold(0.0f64, f64::max);
    if !v.is_certified() || above > tol {
        return Err(Error::InvalidArgument("competitor must be certified and below the obstacle".into()));
    }
    let dominated = v.function().values().iter().zip(pf.values()).map(|(v, p)| v - p).fold(0.0f64, f64::max);
    Ok(vec![
        Check::new("envelope_below_obstacle", below, tol),
        Check::new("envelope_certified", if p.is_certified() { 0.0 } else { f64::INFINITY }, 0.0),
        Check::new("envelope_idempotent", idem, tol),
        Check::new("envelope_maximal", dominated, tol),
    ])
}

/// `theta_u` has total mass `d`.
pub fn slope_mass(model: &PolarizedModel, u: &Weight) -> Result<Check> {
    let total = ma_measure(model, u)?.total();
    Ok(Check::new("slope_mass", (total - model.vol()).abs(), 1e-12 * model.vol()))
}

/// `log Gamma(n)` for a positive integer `n`.
fn ln_factorial_minus_one(n: u64) -> f64 {
    (1..n).map(|i| (i as f64).ln()).sum()
}

/// On Fubini-Study with `u = 0`, `G_j = pi B(j + 1, dk + m - j - 1)`.
/// The residual is the largest relative error of `G_j`.
pub fn beta_norms(model: &PolarizedModel, k: u32, m: u32) -> Result<Check> {
    let space = SectionSpace::new(model, k, m)?;
    let hf = hilbert_form(&space, &GridFunction::zero(*model.grid()))?;
    let c = (model.d() * k + m) as u64;
    let residual = hf
        .log_norms
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let a = j as u64 + 1;
            let exact = std::f64::consts::PI.ln() + ln_factorial_minus_one(a) + ln_factorial_minus_one(c - a)
                - ln_factorial_minus_one(c);
            (g - exact).exp_m1().abs()
        })
        .fold(0.0f64, f64::max);
    Ok(Check::new("beta_norms", residual, 1e-9))
}

/// `E(u, H(v)) + E(v, H(w)) = E(u, H(w))` for the relative quantized energy.
pub fn cocycle(space: &SectionSpace<'_>, u: &GridFunction, v: &GridFunction, w: &GridFunction) -> Result<Check> {
    let hv = hilbert_form(space, v)?;
    let hw = hilbert_form(space, w)?;
    let uv = quantized_energy_relative(space, u, &hv)?;
    let vw = quantized_energy_relative(space, v, &hw)?;
    let uw = quantized_energy_relative(space, u, &hw)?;
    let scale = 1.0 + uv.abs() + vw.abs() + uw.abs();
    Ok(Check::new("cocycle", (uv + vw - uw).abs(), 1e-12 * scale))
}

/// `E(u + c) = E(u) + c` for both energies.
pub fn translation(model: &PolarizedModel, space: &SectionSpace<'_>, u: &Weight, c: f64) -> Result<Vec<Check>> {
    let shifted = Weight::new(model, u.function().shifted(c))?;
    let ek = quantized_energy(space, &shifted.function().clone())? - quantized_energy(space, u.function())? - c;
    let et = ma_energy(model, &shifted)? - ma_energy(model, u)? - c;
    let tol = 1e-12 * (1.0 + c.abs() + u.function().osc() + u.function().max().abs());
    Ok(vec![
        Check::new("translation_quantized", ek.abs(), tol),
        Check::new("translation_ma", et.abs(), tol),
    ])
}

/// `u <= v` implies `E(u) <= E(v)` for both energies; `v = P(u + bump)`
/// with `bump >= 0`. The residual is the largest decrease.
pub fn monotonicity(
    model: &PolarizedModel,
    space: &SectionSpace<'_>,
    u: &Weight,
    bump: &GridFunction,
) -> Result<Vec<Check>> {
    if bump.min() < 0.0 {
        return Err(Error::InvalidArgument("bump must be non-negative".into()));
    }
    let (v, _) = envelope(model, &u.function().combine(1.0, bump, 1.0)?)?;
    let tol = 1e-12 * (1.0 + u.function().osc() + bump.max());
    let ek = quantized_energy(space, u.function())? - quantized_energy(space, v.function())?;
    let et = ma_energy(model, u)? - ma_energy(model, &v)?;
    Ok(vec![
        Check::new("monotone_quantized", ek.max(0.0), tol),
        Check::new("monotone_ma", et.max(0.0), tol),
    ])
}

/// The Bergman density is the supremum of `|sigma|^2 e^{-W} / ||sigma||^2`:
/// `coefficients` never exceed it and the equalizer attains it.
pub fn extremal(space: &SectionSpace<'_>, u: &GridFunction, coefficients: &[Complex64], s: f64) -> Result<Vec<Check>> {
    let hf = hilbert_form(space, u)?;
    let density = log_density_at(space, &hf, u, s)?.exp();
    let r = extremal_ratio(space, u, coefficients, s)? / density;
    let e = extremal_ratio(space, u, &equalizer(&hf, s), s)? / density;
    Ok(vec![
        Check::new("extremal_bound", (r - 1.0).max(0.0), 1e-10),
        Check::new("extremal_attained", (e - 1.0).abs(), 1e-10),
    ])
}

/// Two evaluations of both energies agree bit for bit.
pub fn determinism(model: &PolarizedModel, space: &SectionSpace<'_>, u: &Weight) -> Result<Check> {
    let once = (quantized_energy(space, u.function())?, ma_energy(model, u)?);
    let twice = (quantized_energy(space, u.function())?, ma_energy(model, u)?);
    let same = once.0.to_bits() == twice.0.to_bits() && once.1.to_bits() == twice.1.to_bits();
    Ok(Check::new("determinism", if same { 0.0 } else { f64::INFINITY }, 0.0))
}

/// A bounded, generally non-psh obstacle: `a sech((s - b)/w) + c tanh(s)`
/// plus a Fubini-Study-shaped ramp of height `ramp`.
pub fn bump_obstacle(model: &PolarizedModel, a: f64, b: f64, w: f64, c: f64, ramp: f64) -> GridFunction {
    GridFunction::from_fn(
        *model.grid(),
        |s| a / ((s - b) / w).cosh() + c * s.tanh() + ramp * (softplus(s) - softplus(s - 1.0)),
        0.0,
        0.0,
    )
    .expect("obstacle is finite")
}
