//! Discrete Legendre transforms and slope-constrained convex envelopes.
//!
//! Both directions run in linear time: a lower convex hull (monotone chain)
//! followed by a pointer sweep, since the maximizer moves monotonically with
//! the dual variable. Ties go to the leftmost maximizer.

use crate::error::{Error, Result};

use super::grid::{ConvexPotential, DualGrid, DualGridFunction, Grid, GridFunction};

/// Indices of the lower convex hull of `(x_i, y_i)`, with `x` strictly
/// increasing. Collinear interior points are dropped.
pub fn lower_hull(x: &[f64], y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b unless it lies strictly below the chord a -> i.
            let cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// For each query `q` (ascending), `max_i q*x_i - y_i` over the hull and the
/// leftmost maximizing index.
fn conjugate_sweep(x: &[f64], y: &[f64], queries: impl Iterator<Item = f64>) -> Vec<(f64, usize)> {
    let hull = lower_hull(x, y);
    let mut p = 0;
    queries
        .map(|q| {
            let val = |i: usize| q * x[i] - y[i];
            while p + 1 < hull.len() && val(hull[p + 1]) > val(hull[p]) {
                p += 1;
            }
            (val(hull[p]), hull[p])
        })
        .collect()
}

/// `g(xi) = sup_s xi*s - f(s)` on the dual grid, the supremum taken over the
/// nodes and the two affine tails.
///
/// Where `xi` lies outside `[a-, a+]` a tail makes the supremum infinite;
/// this is recorded as `+inf` at an endpoint node and is an error anywhere
/// else.
pub fn legendre_dual(f: &GridFunction, dual: DualGrid) -> Result<DualGridFunction> {
    legendre_dual_with_argmax(f, dual).map(|(g, _)| g)
}

/// [`legendre_dual`] together with the maximizing node index per dual node
/// (`usize::MAX` where the value is infinite).
pub fn legendre_dual_with_argmax(f: &GridFunction, dual: DualGrid) -> Result<(DualGridFunction, Vec<usize>)> {
    let s: Vec<f64> = f.grid().nodes().collect();
    let swept = conjugate_sweep(&s, f.values(), dual.nodes());
    let (lo, hi) = (f.left_slope(), f.right_slope());
    let mut values = Vec::with_capacity(dual.len());
    let mut argmax = Vec::with_capacity(dual.len());
    for (j, (v, i)) in swept.into_iter().enumerate() {
        let xi = dual.node(j);
        if xi < lo || xi > hi {
            if j != 0 && j + 1 != dual.len() {
                return Err(Error::DualDivergence { index: j, xi });
            }
            values.push(f64::INFINITY);
            argmax.push(usize::MAX);
        } else {
            values.push(v);
            argmax.push(i);
        }
    }
    Ok((DualGridFunction::new(dual, values)?, argmax))
}

/// `f(s) = max_j s*xi_j - g(xi_j)` over the finite dual nodes, with slopes
/// `(first finite xi, last finite xi)`.
pub fn legendre_primal(g: &DualGridFunction, grid: Grid) -> Result<ConvexPotential> {
    legendre_primal_with_argmax(g, grid).map(|(f, _)| f)
}

/// [`legendre_primal`] together with the maximizing dual index per node.
pub fn legendre_primal_with_argmax(g: &DualGridFunction, grid: Grid) -> Result<(ConvexPotential, Vec<usize>)> {
    let finite: Vec<usize> = (0..g.grid().len()).filter(|&j| !g.is_infinite_at(j)).collect();
    if finite.is_empty() {
        return Err(Error::InvalidArgument("dual potential has no finite node".into()));
    }
    let xi: Vec<f64> = finite.iter().map(|&j| g.grid().node(j)).collect();
    let gv: Vec<f64> = finite.iter().map(|&j| g.values()[j]).collect();
    let (f, argmax) = primal_at(&xi, &gv, grid)?;
    Ok((f, argmax.into_iter().map(|i| finite[i]).collect()))
}

/// Transform of `f` at arbitrary ascending points, all inside `[a-, a+]`.
pub fn conjugate_at(f: &GridFunction, xi: &[f64]) -> Result<Vec<f64>> {
    conjugate_with_argmax_at(f, xi).map(|(g, _)| g)
}

/// [`conjugate_at`] together with the leftmost maximizing node per point.
pub fn conjugate_with_argmax_at(f: &GridFunction, xi: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    if xi.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("dual points must be ascending".into()));
    }
    if let Some(j) = xi.iter().position(|&x| x < f.left_slope() || x > f.right_slope()) {
        return Err(Error::DualDivergence { index: j, xi: xi[j] });
    }
    let s: Vec<f64> = f.grid().nodes().collect();
    Ok(conjugate_sweep(&s, f.values(), xi.iter().copied()).into_iter().unzip())
}

/// `max_j s*xi_j - g_j` at every node for convex finite data on ascending,
/// not necessarily uniform points; also returns the leftmost maximizer.
///
/// Secant slopes of `g` are made monotone before sweeping, which absorbs
/// rounding-level non-convexity.
pub fn primal_at(xi: &[f64], g: &[f64], grid: Grid) -> Result<(ConvexPotential, Vec<usize>)> {
    if xi.is_empty() || xi.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: xi.len(),
            got: g.len(),
        });
    }
    if xi.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("dual points must be strictly ascending".into()));
    }
    let mut run = f64::NEG_INFINITY;
    let slopes: Vec<f64> = xi
        .windows(2)
        .zip(g.windows(2))
        .map(|(x, y)| {
            run = run.max((y[1] - y[0]) / (x[1] - x[0]));
            run
        })
        .collect();
    primal_with_slopes(xi, g, &slopes, grid)
}

/// Primal transform when the slope of `g` on each interval
/// `[xi_j, xi_{j+1}]` is known exactly (and non-decreasing): the maximizer
/// at `s` is the first breakpoint whose right slope is at least `s`.
pub fn primal_with_slopes(xi: &[f64], g: &[f64], slopes: &[f64], grid: Grid) -> Result<(ConvexPotential, Vec<usize>)> {
    if xi.is_empty() || xi.len() != g.len() || slopes.len() + 1 != xi.len() {
        return Err(Error::LengthMismatch {
            expected: xi.len(),
            got: g.len().min(slopes.len() + 1),
        });
    }
    if let Some(j) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::DualDivergence { index: j, xi: xi[j] });
    }
    let mut p = 0;
    let (values, argmax): (Vec<f64>, Vec<usize>) = grid
        .nodes()
        .map(|s| {
            while p < slopes.len() && slopes[p] < s {
                p += 1;
            }
            (s * xi[p] - g[p], p)
        })
        .unzip();
    let f = GridFunction::from_values(grid, values, xi[0], xi[xi.len() - 1])?;
    Ok((ConvexPotential::new(f)?, argmax))
}

/// The largest convex function below `f` (including its affine tails) whose
/// slopes lie in `[lo, hi]`.
///
/// The effective window is `[max(lo, a-), min(hi, a+)]`: any smaller left
/// slope or larger right slope would eventually cross above a tail of `f`.
/// The result is the upper envelope of the supporting lines of the lower
/// hull of `f` with slopes inside the window.
pub fn constrained_convex_envelope(f: &GridFunction, lo: f64, hi: f64) -> Result<ConvexPotential> {
    let lo = lo.max(f.left_slope());
    let hi = hi.min(f.right_slope());
    if lo > hi {
        return Err(Error::SlopeWindow(format!(
            "empty slope window [{lo}, {hi}] after intersecting with the tails of f"
        )));
    }
    let grid = *f.grid();
    let s: Vec<f64> = grid.nodes().collect();
    let v = f.values();
    let hull = lower_hull(&s, v);

    let support = |slope: f64| {
        let c = s.iter().zip(v).map(|(s, v)| v - slope * s).fold(f64::INFINITY, f64::min);
        (slope, c)
    };
    let mut lines = vec![support(lo)];
    for e in hull.windows(2) {
        let slope = (v[e[1]] - v[e[0]]) / (s[e[1]] - s[e[0]]);
        if slope > lo && slope < hi {
            lines.push((slope, v[e[0]] - slope * s[e[0]]));
        }
    }
    if hi > lo {
        lines.push(support(hi));
    }

    let mut p = 0;
    let values: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let val = |l: (f64, f64)| l.0 * x + l.1;
            while p + 1 < lines.len() && val(lines[p + 1]) >= val(lines[p]) {
                p += 1;
            }
            // Never exceed f itself; equality holds on the contact set up to rounding.
            val(lines[p]).min(v[i])
        })
        .collect();
    let out = GridFunction::from_values(grid, values, lo, hi)?;
    ConvexPotential::new(out)
}

/// Envelope computed the slow way: dual on a `[lo, hi]` grid, then primal.
/// Agrees with [`constrained_convex_envelope`] up to the dual resolution.
pub fn biconjugate(f: &GridFunction, lo: f64, hi: f64, m_nodes: usize) -> Result<ConvexPotential> {
    let lo = lo.max(f.left_slope());
    let hi = hi.min(f.right_slope());
    let dual = DualGrid::new(lo, hi, m_nodes)?;
    let g = legendre_dual(f, dual)?;
    legendre_primal(&g, *f.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{fubini_study, softplus};

    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f(0.5 * (a + b))
    }

    #[test]
    fn dual_of_fubini_study_at_half() {
        let grid = Grid::default();
        let dual = DualGrid::new(0.0, 1.0, 1001).unwrap();
        let g = legendre_dual(&fubini_study(grid, 1.0), dual).unwrap();
        let oracle = golden_max(|s| 0.5 * s - softplus(s), -30.0, 30.0);
        assert!((oracle + 2f64.ln()).abs() < 1e-12);
        assert!((g.values()[500] - oracle).abs() < 1e-5);
        // Closed form xi log xi + (1-xi) log(1-xi) elsewhere.
        for j in [100, 250, 900] {
            let xi: f64 = dual.node(j);
            let exact = xi * xi.ln() + (1.0 - xi) * (1.0 - xi).ln();
            assert!((g.values()[j] - exact).abs() < 1e-4, "{j}");
        }
    }

    #[test]
    fn dual_of_doubled_fubini_study_at_one() {
        let grid = Grid::default();
        let dual = DualGrid::new(0.0, 2.0, 2001).unwrap();
        let g = legendre_dual(&fubini_study(grid, 2.0), dual).unwrap();
        assert!((g.values()[1000] + 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dual_of_affine_function() {
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let f = GridFunction::from_fn(grid, |s| 0.5 * s + 3.0, 0.5, 0.5).unwrap();
        let dual = DualGrid::new(0.0, 1.0, 3).unwrap();
        let g = legendre_dual(&f, dual).unwrap();
        assert_eq!(g.values()[1], -3.0);
        assert!(g.is_infinite_at(0) && g.is_infinite_at(2));
    }

    #[test]
    fn interior_divergence_is_an_error() {
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let f = GridFunction::from_fn(grid, |s| 0.5 * softplus(s), 0.0, 0.5).unwrap();
        let dual = DualGrid::new(0.0, 1.0, 5).unwrap();
        assert!(matches!(legendre_dual(&f, dual), Err(Error::DualDivergence { index: 3, .. })));
    }

    #[test]
    fn primal_of_constant_dual() {
        let grid = Grid::new(-3.0, 3.0, 61).unwrap();
        let dual = DualGrid::new(0.0, 2.0, 11).unwrap();
        let g = DualGridFunction::new(dual, vec![1.5; 11]).unwrap();
        let f = legendre_primal(&g, grid).unwrap();
        for (s, v) in grid.nodes().zip(f.values()) {
            assert!((v - (2.0 * s.max(0.0) - 1.5)).abs() < 1e-14);
        }
        assert_eq!((f.left_slope(), f.right_slope()), (0.0, 2.0));
    }

    #[test]
    fn involution_on_fubini_study() {
        let grid = Grid::default();
        let phi = fubini_study(grid, 1.0);
        let dual = DualGrid::new(0.0, 1.0, 4001).unwrap();
        let back = legendre_primal(&legendre_dual(&phi, dual).unwrap(), grid).unwrap();
        let err = back.sup_distance(&phi).unwrap();
        assert!(err <= grid.h() + 1.0 / 4001.0, "{err:e}");
    }

    #[test]
    fn envelope_of_abs_is_positive_part() {
        let grid = Grid::new(-5.0, 5.0, 101).unwrap();
        let f = GridFunction::from_fn(grid, f64::abs, -1.0, 1.0).unwrap();
        let env = constrained_convex_envelope(&f, 0.0, 1.0).unwrap();
        for (s, v) in grid.nodes().zip(env.values()) {
            assert!((v - s.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn envelope_fixes_feasible_functions() {
        let grid = Grid::default();
        let phi = fubini_study(grid, 1.0).shifted(-10.0);
        let env = constrained_convex_envelope(&phi, 0.0, 1.0).unwrap();
        assert!(env.sup_distance(&phi).unwrap() < 1e-12);
    }

    #[test]
    fn biconjugate_of_clipped_cosine_is_envelope() {
        let grid = Grid::new(-6.0, 6.0, 241).unwrap();
        let f = GridFunction::from_fn(grid, |s| -s.clamp(-3.0, 3.0).cos(), 0.0, 0.0).unwrap();
        let env = constrained_convex_envelope(&f, 0.0, 0.0).unwrap();
        let bi = biconjugate(&f, 0.0, 0.0, 2).unwrap_err();
        // Zero-width window has no interior dual grid; compare on a real window instead.
        assert!(matches!(bi, Error::InvalidGrid(_)));
        assert!(env.values().iter().all(|&v| (v + 1.0).abs() < 1e-14));

        let g = GridFunction::from_fn(grid, |s| -s.clamp(-3.0, 3.0).cos() + 0.3 * s, 0.3, 0.3).unwrap();
        let wide = GridFunction::from_values(grid, g.values().to_vec(), -1.0, 1.0).unwrap();
        let env = constrained_convex_envelope(&wide, -1.0, 1.0).unwrap();
        let bi = biconjugate(&wide, -1.0, 1.0, 20001).unwrap();
        assert!(env.sup_distance(&bi).unwrap() < 1e-3);
    }

    #[test]
    fn leftmost_tie_break() {
        let grid = Grid::new(-2.0, 2.0, 5).unwrap();
        let f = GridFunction::from_values(grid, vec![1.0, 0.0, 0.0, 0.0, 1.0], -1.0, 1.0).unwrap();
        let dual = DualGrid::new(-1.0, 1.0, 3).unwrap();
        let (_, arg) = legendre_dual_with_argmax(&f, dual).unwrap();
        assert_eq!(arg[1], 1);
    }
}
