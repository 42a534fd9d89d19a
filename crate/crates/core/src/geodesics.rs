//! Weak geodesics between bounded weights.
//!
//! In the radial model the upper-envelope geodesic is obtained by partial
//! Legendre duality: with `g_0`, `g_1` the transforms of `Phi_0 + u_0` and
//! `Phi_0 + u_1` on `[0, d]`, `Phi_t` is the transform of `(1-t) g_0 + t g_1`.
//!
//! By default the duals are sampled at the union of the cell slopes of both
//! endpoints. The transform of a piecewise linear function is piecewise
//! linear with kinks exactly there, so the endpoints are recovered to
//! rounding and the path is the exact geodesic between the piecewise linear
//! interpolants. A uniform dual grid is available for comparison.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pluripotential::{ma_energy, ma_measure, PolarizedModel, Weight};
use crate::radial::legendre::{conjugate_at, conjugate_with_argmax_at, primal_with_slopes};
use crate::radial::measure::pair_measure;
use crate::radial::{DualGrid, Grid, GridFunction};
use crate::sections::{bergman_density, quantized_energy, SectionSpace};

/// Uniform dual resolution on `[0, d]` used by [`make_geodesic_with_resolution`].
pub const DEFAULT_DUAL_NODES: usize = 4001;

#[derive(Debug, Clone)]
pub struct GeodesicPath<'a> {
    model: &'a PolarizedModel,
    u0: Weight,
    u1: Weight,
    xi: Vec<f64>,
    g0: Vec<f64>,
    g1: Vec<f64>,
    // Slopes of g0 and g1 on each interval [xi_j, xi_{j+1}].
    slope0: Vec<f64>,
    slope1: Vec<f64>,
    lipschitz_bound: f64,
    tolerance: f64,
}

/// Geodesic with duals sampled at the cell slopes of both endpoints.
pub fn make_geodesic<'a>(model: &'a PolarizedModel, u0: &Weight, u1: &Weight) -> Result<GeodesicPath<'a>> {
    check_endpoints(u0, u1)?;
    let d = model.vol();
    let f0 = model.potential(u0.function())?;
    let f1 = model.potential(u1.function())?;
    let h = model.grid().h();
    let mut xi: Vec<f64> = vec![0.0, d];
    for f in [&f0, &f1] {
        xi.extend(f.values().windows(2).map(|w| ((w[1] - w[0]) / h).clamp(0.0, d)));
    }
    xi.sort_by(f64::total_cmp);
    xi.dedup();
    // On each interval the maximizer is a single node; its position is the
    // exact slope of the dual there.
    let mids: Vec<f64> = xi.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let grid = *model.grid();
    let (_, a0) = conjugate_with_argmax_at(&f0, &mids)?;
    let (_, a1) = conjugate_with_argmax_at(&f1, &mids)?;
    let slope0 = a0.into_iter().map(|i| grid.node(i)).collect();
    let slope1 = a1.into_iter().map(|i| grid.node(i)).collect();
    let scale = f0.values().iter().chain(f1.values()).fold(0.0_f64, |m, v| m.max(v.abs()));
    build(model, u0, u1, xi, Some((slope0, slope1)), 1e-10 * (1.0 + scale))
}

/// Geodesic with duals on a uniform grid of `m_nodes` points over `[0, d]`.
/// Endpoint recovery is then only accurate to about `h + d/m_nodes`.
pub fn make_geodesic_with_resolution<'a>(
    model: &'a PolarizedModel,
    u0: &Weight,
    u1: &Weight,
    m_nodes: usize,
) -> Result<GeodesicPath<'a>> {
    check_endpoints(u0, u1)?;
    let dual = DualGrid::new(0.0, model.vol(), m_nodes)?;
    let tol = model.grid().h() + model.vol() / m_nodes as f64;
    build(model, u0, u1, dual.nodes().collect(), None, tol)
}

fn check_endpoints(u0: &Weight, u1: &Weight) -> Result<()> {
    if u0.is_certified() && u1.is_certified() {
        Ok(())
    } else {
        Err(Error::Uncertified)
    }
}

/// Checks endpoint recovery and the Lipschitz bound at
/// `t = 0, 1/4, 1/2, 3/4, 1`.
fn build<'a>(
    model: &'a PolarizedModel,
    u0: &Weight,
    u1: &Weight,
    xi: Vec<f64>,
    slopes: Option<(Vec<f64>, Vec<f64>)>,
    tolerance: f64,
) -> Result<GeodesicPath<'a>> {
    let g0 = conjugate_at(&model.potential(u0.function())?, &xi)?;
    let g1 = conjugate_at(&model.potential(u1.function())?, &xi)?;
    let (slope0, slope1) = slopes.unwrap_or_else(|| (secant_slopes(&xi, &g0), secant_slopes(&xi, &g1)));
    let lipschitz_bound = u0.function().sup_distance(u1.function())?;
    let path = GeodesicPath {
        model,
        u0: u0.clone(),
        u1: u1.clone(),
        xi,
        g0,
        g1,
        slope0,
        slope1,
        lipschitz_bound,
        tolerance,
    };

    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let samples = ts.iter().map(|&t| path.evaluate(t)).collect::<Result<Vec<_>>>()?;
    let e0 = samples[0].function().sup_distance(u0.function())?;
    let e1 = samples[4].function().sup_distance(u1.function())?;
    if e0 > tolerance || e1 > tolerance {
        return Err(Error::Resolution(format!(
            "endpoint recovery errors {e0:e}, {e1:e} exceed {tolerance:e}"
        )));
    }
    for a in 0..ts.len() {
        for b in a + 1..ts.len() {
            let dist = samples[a].function().sup_distance(samples[b].function())?;
            let bound = lipschitz_bound * (ts[b] - ts[a]) + 2.0 * tolerance;
            if dist > bound {
                return Err(Error::Resolution(format!(
                    "Lipschitz bound violated between t={} and t={}: {dist:e} > {bound:e}",
                    ts[a], ts[b]
                )));
            }
        }
    }
    Ok(path)
}

/// Monotone secant slopes of sampled convex data.
fn secant_slopes(xi: &[f64], g: &[f64]) -> Vec<f64> {
    let mut run = f64::NEG_INFINITY;
    xi.windows(2)
        .zip(g.windows(2))
        .map(|(x, y)| {
            run = run.max((y[1] - y[0]) / (x[1] - x[0]));
            run
        })
        .collect()
}

impl<'a> GeodesicPath<'a> {
    pub fn model(&self) -> &'a PolarizedModel {
        self.model
    }

    pub fn start(&self) -> &Weight {
        &self.u0
    }

    pub fn end(&self) -> &Weight {
        &self.u1
    }

    /// Dual sample points in `[0, d]`.
    pub fn dual_nodes(&self) -> &[f64] {
        &self.xi
    }

    /// `(g_0, g_1)` at [`GeodesicPath::dual_nodes`].
    pub fn duals(&self) -> (&[f64], &[f64]) {
        (&self.g0, &self.g1)
    }

    /// `sup |u_0 - u_1|`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Endpoint recovery tolerance.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    fn primal(&self, t: f64) -> Result<(GridFunction, Vec<usize>)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
        }
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| (1.0 - t) * a + t * b).collect() };
        let (phi, argmax) = primal_with_slopes(
            &self.xi,
            &mix(&self.g0, &self.g1),
            &mix(&self.slope0, &self.slope1),
            *self.model.grid(),
        )?;
        Ok((phi.into_function(), argmax))
    }

    /// `u_t = primal((1-t) g_0 + t g_1) - Phi_0`.
    pub fn evaluate(&self, t: f64) -> Result<Weight> {
        let (phi, _) = self.primal(t)?;
        let u = phi.combine(1.0, self.model.phi0(), -1.0)?;
        let u = GridFunction::from_values(*self.model.grid(), u.into_values(), 0.0, 0.0)?;
        Weight::new(self.model, u)
    }

    /// The same path with the endpoints exchanged.
    pub fn reversed(&self) -> GeodesicPath<'a> {
        GeodesicPath {
            model: self.model,
            u0: self.u1.clone(),
            u1: self.u0.clone(),
            xi: self.xi.clone(),
            g0: self.g1.clone(),
            g1: self.g0.clone(),
            slope0: self.slope1.clone(),
            slope1: self.slope0.clone(),
            lipschitz_bound: self.lipschitz_bound,
            tolerance: self.tolerance,
        }
    }
}

/// `du_t/dt` at `t = 0` by the envelope theorem: `g_0(xi*) - g_1(xi*)` at the
/// maximizer `xi*(s)` of the `t = 0` Legendre problem.
///
/// With slope-sampled duals the maximizer at a node is a whole run of dual
/// points (the subgradient interval); the right derivative is the largest
/// value over that run, which starts at the leftmost maximizer.
/// Cross-checked against `(u_{0.001} - u_0)/0.001` within
/// `1e-3 * lipschitz_bound`.
pub fn initial_tangent(path: &GeodesicPath<'_>) -> Result<GridFunction> {
    let grid = *path.model.grid();
    let (_, argmax) = path.primal(0.0)?;
    let values: Vec<f64> = argmax
        .iter()
        .enumerate()
        .map(|(i, &j0)| {
            let s = grid.node(i);
            let mut best = path.g0[j0] - path.g1[j0];
            let mut j = j0;
            while j < path.slope0.len() && path.slope0[j] <= s {
                j += 1;
                best = best.max(path.g0[j] - path.g1[j]);
            }
            best
        })
        .collect();
    let tangent = GridFunction::from_values(grid, values, 0.0, 0.0)?;

    let t = 1e-3;
    let ut = path.evaluate(t)?;
    let u0 = path.evaluate(0.0)?;
    let fd = ut.function().combine(1.0 / t, u0.function(), -1.0 / t)?;
    let diff = fd.sup_distance(&tangent)?;
    let tol = 1e-3 * path.lipschitz_bound + 1e-9;
    if diff > tol {
        return Err(Error::Resolution(format!(
            "initial tangent disagrees with the difference quotient by {diff:e} > {tol:e}"
        )));
    }
    Ok(tangent)
}

/// Energies along a geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub t: Vec<f64>,
    pub e_theta: Vec<f64>,
    pub k_list: Vec<u32>,
    /// `e_k[c][i]` is `E_{k_list[c]}(u_{t_i})`.
    pub e_k: Vec<Vec<f64>>,
    /// `max_t |E_theta(u_t) - chord|`.
    pub affinity_residual: f64,
    /// Smallest second difference of each `E_k` column.
    pub min_second_difference: Vec<f64>,
}

/// Convexity defect of a sampled profile: `2 (chord - E)` at interior points,
/// which is the ordinary second difference on a uniform grid.
pub fn second_differences(t: &[f64], e: &[f64]) -> Vec<f64> {
    (1..t.len().saturating_sub(1))
        .map(|i| {
            let (a, b, c) = (t[i - 1], t[i], t[i + 1]);
            let chord = ((c - b) * e[i - 1] + (b - a) * e[i + 1]) / (c - a);
            2.0 * (chord - e[i])
        })
        .collect()
}

pub fn energy_profiles(path: &GeodesicPath<'_>, t_grid: &[f64], k_list: &[u32], m: u32) -> Result<EnergyProfile> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t grid must be strictly increasing with at least two points".into()));
    }
    let model = path.model;
    let spaces = k_list
        .iter()
        .map(|&k| SectionSpace::new(model, k, m))
        .collect::<Result<Vec<_>>>()?;
    let rows = t_grid
        .par_iter()
        .map(|&t| -> Result<(f64, Vec<f64>)> {
            let u = path.evaluate(t)?;
            let e = ma_energy(model, &u)?;
            let ek = spaces
                .iter()
                .map(|sp| quantized_energy(sp, u.function()))
                .collect::<Result<Vec<_>>>()?;
            Ok((e, ek))
        })
        .collect::<Result<Vec<_>>>()?;
    let e_theta: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let e_k: Vec<Vec<f64>> = (0..k_list.len()).map(|c| rows.iter().map(|r| r.1[c]).collect()).collect();

    let (t0, t1) = (t_grid[0], t_grid[t_grid.len() - 1]);
    let (e0, e1) = (e_theta[0], e_theta[e_theta.len() - 1]);
    let affinity_residual = t_grid
        .iter()
        .zip(&e_theta)
        .map(|(t, e)| (e - (e0 + (e1 - e0) * (t - t0) / (t1 - t0))).abs())
        .fold(0.0, f64::max);
    let min_second_difference = e_k
        .iter()
        .map(|col| second_differences(t_grid, col).into_iter().fold(f64::INFINITY, f64::min))
        .collect();
    Ok(EnergyProfile {
        t: t_grid.to_vec(),
        e_theta,
        k_list: k_list.to_vec(),
        e_k,
        affinity_residual,
        min_second_difference,
    })
}

/// One-sided Richardson steps at `t = 0`, as a fraction of the grid step.
///
/// For `t` below roughly `h` the discrete path moves along its exact right
/// derivative (the maximizers stay inside their subgradient runs) and the
/// difference quotient is linear in `t`. Beyond that it bends over to the
/// smooth derivative, which is `O(h)` lower. Steps inside the linear
/// regime measure the derivative of the computed path itself.
pub const RICHARDSON_FRACTION: f64 = 0.1;

/// `(t1, t1 / 2)` with `t1 = RICHARDSON_FRACTION * h`.
pub fn richardson_steps(grid: &Grid) -> (f64, f64) {
    let t1 = RICHARDSON_FRACTION * grid.h();
    (t1, 0.5 * t1)
}

/// `d/dt E_k(u_t)` at `t = 0` two ways: Richardson-extrapolated one-sided
/// difference quotient (`lhs`) and `int u'_0 d beta_{k, u_0}` (`rhs`).
/// They must agree within `1e-4 * osc(u'_0)`.
pub fn qma_initial_derivative(path: &GeodesicPath<'_>, space: &SectionSpace<'_>) -> Result<(f64, f64)> {
    if !std::ptr::eq(space.model(), path.model) && space.model() != path.model {
        return Err(Error::InvalidArgument("section space and path use different models".into()));
    }
    let (t1, t2) = richardson_steps(path.model.grid());
    let e = |t: f64| -> Result<f64> { quantized_energy(space, path.evaluate(t)?.function()) };
    let e0 = e(0.0)?;
    let d1 = (e(t1)? - e0) / t1;
    let d2 = (e(t2)? - e0) / t2;
    let lhs = (t1 * d2 - t2 * d1) / (t1 - t2);

    let tangent = initial_tangent(path)?;
    let u0 = path.evaluate(0.0)?;
    let beta = bergman_density(space, u0.function(), true)?;
    let rhs = beta.pair(&tangent)?;
    let tol = 1e-4 * tangent.osc() + 1e-10 * (1.0 + rhs.abs());
    let diff = (lhs - rhs).abs();
    if diff > tol {
        return Err(Error::Disagreement {
            what: "QMA variation along geodesic",
            lhs,
            rhs,
            diff,
            tol,
        });
    }
    Ok((lhs, rhs))
}

/// Symmetric difference step for [`affine_path_derivative`], halved once for
/// Richardson extrapolation.
pub const AFFINE_STEP: f64 = 1e-3;

/// `d/dt E_k(phi + t f)` at `t = 0` (symmetric, Richardson-extrapolated)
/// against `int f d beta_{k, phi}`; agreement within `1e-5 * osc(f)`.
pub fn affine_path_derivative(space: &SectionSpace<'_>, phi: &GridFunction, f: &GridFunction) -> Result<(f64, f64)> {
    let e = |t: f64| -> Result<f64> { quantized_energy(space, &phi.combine(1.0, f, t)?) };
    let sym = |t: f64| -> Result<f64> { Ok((e(t)? - e(-t)?) / (2.0 * t)) };
    let h = AFFINE_STEP;
    let (a, b) = (sym(h)?, sym(h / 2.0)?);
    let slope = (4.0 * b - a) / 3.0;
    let beta = bergman_density(space, phi, true)?;
    let pairing = beta.pair(f)?;
    let tol = 1e-5 * f.osc() + 1e-10 * (1.0 + pairing.abs());
    let diff = (slope - pairing).abs();
    if diff > tol {
        return Err(Error::Disagreement {
            what: "QMA variation along affine path",
            lhs: slope,
            rhs: pairing,
            diff,
            tol,
        });
    }
    Ok((slope, pairing))
}

/// `(E_theta(u_1) - E_theta(u_0), (1/d) int u'_0 theta_{u_0})`; the first
/// never exceeds the second.
pub fn ma_energy_initial_slope(path: &GeodesicPath<'_>) -> Result<(f64, f64)> {
    let model = path.model;
    let u0 = path.evaluate(0.0)?;
    let u1 = path.evaluate(1.0)?;
    let chord = ma_energy(model, &u1)? - ma_energy(model, &u0)?;
    let tangent = initial_tangent(path)?;
    let pairing = pair_measure(&tangent, &ma_measure(model, &u0)?)? / model.vol();
    Ok((chord, pairing))
}
