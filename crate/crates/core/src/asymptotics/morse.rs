//! Local Morse inequalities, global domination and the convergence of
//! Bergman measures and quantized energies at equilibrium.

use rayon::prelude::*;

use super::linear_regression;
use crate::error::{Error, Result};
use crate::families::log_logistic_density;
use crate::pluripotential::{envelope, ma_energy, PolarizedModel};
use crate::radial::{slope_cdf, GridFunction};
use crate::sections::{bergman_density, quantized_energy, SectionSpace};

/// Curvature threshold defining the strictly negative region.
pub const NEGATIVE_MARGIN: f64 = 1e-3;
/// Largest accepted growth of clause (a) per doubling of `k`.
pub const GROWTH_TOL: f64 = 1e-3;
/// Smallest accepted coefficient of determination of the decay fit.
pub const DECAY_R2: f64 = 0.95;
/// Pointwise slack of global domination.
pub const DOMINATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MorseRow {
    pub k: u32,
    /// `sup (1/k) p_k / rho_omega`, `rho_omega = phi_FS''`.
    pub scaled_sup: f64,
    /// Largest normalized density on the negative region, if non-empty.
    pub negative_max: Option<f64>,
    /// `max (b_k / sup b_k - e^{k (P(phi) - phi)})`, `b_k = p_k / rho_omega`.
    pub domination_residual: f64,
    pub twisted: Option<TwistedMorse>,
}

/// The twisted bound `(1/k) p_{k,m} <= (1 + delta_k) (theta_phi + (m/k) omega)`,
/// reported where the right side is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistedMorse {
    pub ratio: f64,
    /// `log(ratio (1 - e^{-(m/k) (log k)^2}))`.
    pub rho_hat: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorseReport {
    pub rows: Vec<MorseRow>,
    /// Nodes where the discrete curvature of `Phi_0 + phi` is `<= -margin`.
    pub negative_region: Vec<bool>,
    /// `(1/k) p_k / rho_omega` at the largest `k`.
    pub limsup_proxy: GridFunction,
    /// Regression slope of clause (a) against `log2 k`.
    pub growth_slope: f64,
    /// `(c, R^2)` of `log negative_max ~ -c k`.
    pub decay: Option<(f64, f64)>,
}

impl MorseReport {
    pub fn max_domination_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.domination_residual).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clauses (a), (b), (c) at the module tolerances.
    pub fn verify(&self) -> Result<()> {
        if self.growth_slope > GROWTH_TOL {
            return Err(Error::MorseClause {
                clause: 'a',
                detail: format!("growth {:.3e} per doubling exceeds {GROWTH_TOL:e}", self.growth_slope),
            });
        }
        if let Some((c, r2)) = self.decay {
            if !(c > 0.0 && r2 >= DECAY_R2) {
                return Err(Error::MorseClause {
                    clause: 'b',
                    detail: format!("decay rate {c:.3e} with R^2 {r2:.4}"),
                });
            }
        }
        let res = self.max_domination_residual();
        if res > DOMINATION_TOL {
            return Err(Error::MorseClause {
                clause: 'c',
                detail: format!("domination residual {res:.3e}"),
            });
        }
        Ok(())
    }
}

/// Discrete curvature `(Phi_0 + phi)''`: exact for `Phi_0` when the model
/// carries it, second differences for `phi`.
fn curvature(model: &PolarizedModel, phi: &GridFunction) -> Vec<f64> {
    let v = phi.values();
    let h = model.grid().h();
    let n = v.len();
    let mut c = model.curvature();
    for i in 0..n {
        let j = i.clamp(1, n - 2);
        c[i] += (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
    }
    c
}

pub fn morse_report(model: &PolarizedModel, phi: &GridFunction, k_list: &[u32], m: u32) -> Result<MorseReport> {
    if k_list.is_empty() {
        return Err(Error::InvalidArgument("empty k list".into()));
    }
    let grid = *model.grid();
    let (p_env, _) = envelope(model, phi)?;
    let gap: Vec<f64> = p_env
        .function()
        .values()
        .iter()
        .zip(phi.values())
        .map(|(p, f)| p - f)
        .collect();
    let curv = curvature(model, phi);
    let negative_region: Vec<bool> = curv.iter().map(|c| *c <= -NEGATIVE_MARGIN).collect();
    let log_rho: Vec<f64> = grid.nodes().map(log_logistic_density).collect();

    let rows = k_list
        .par_iter()
        .map(|&k| -> Result<(MorseRow, Vec<f64>)> {
            let kf = k as f64;
            let dens = bergman_density(&SectionSpace::new(model, k, 0)?, phi, false)?;
            let log_b: Vec<f64> = dens.log_density.values().iter().zip(&log_rho).map(|(p, r)| p - r).collect();
            let top = log_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scaled: Vec<f64> = log_b.iter().map(|b| b.exp() / kf).collect();
            let n = dens.dim as f64;
            let negative_max = negative_region
                .iter()
                .zip(dens.density.values())
                .filter(|(neg, _)| **neg)
                .map(|(_, p)| p / n)
                .reduce(f64::max);
            let domination_residual = log_b
                .iter()
                .zip(&gap)
                .map(|(b, g)| (b - top).exp() - (kf * g).exp())
                .fold(f64::NEG_INFINITY, f64::max);
            let twisted = if m >= 1 {
                let tw = bergman_density(&SectionSpace::new(model, k, m)?, phi, false)?;
                let eps = m as f64 / kf;
                let ratio = tw
                    .density
                    .values()
                    .iter()
                    .zip(&curv)
                    .zip(&log_rho)
                    .filter_map(|((p, c), r)| {
                        let rhs = c + eps * r.exp();
                        (rhs > 0.0).then(|| p / kf / rhs)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                let damp = -(-eps * kf.ln().powi(2)).exp_m1();
                Some(TwistedMorse {
                    ratio,
                    rho_hat: (ratio * damp).ln(),
                    delta: ratio - 1.0,
                })
            } else {
                None
            };
            let row = MorseRow {
                k,
                scaled_sup: scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                negative_max,
                domination_residual,
                twisted,
            };
            Ok((row, scaled))
        })
        .collect::<Result<Vec<_>>>()?;

    let kx: Vec<f64> = k_list.iter().map(|k| (*k as f64).log2()).collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.0.scaled_sup).collect();
    let growth_slope = if k_list.len() >= 2 { linear_regression(&kx, &sups).0 } else { 0.0 };
    let decay = if rows.iter().all(|r| r.0.negative_max.is_some()) && k_list.len() >= 2 {
        let ks: Vec<f64> = k_list.iter().map(|k| *k as f64).collect();
        let logs: Vec<f64> = rows.iter().map(|r| r.0.negative_max.unwrap().ln()).collect();
        let (slope, _, r2) = linear_regression(&ks, &logs);
        Some((-slope, r2))
    } else {
        None
    };
    let (rows, scaled): (Vec<MorseRow>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let limsup_proxy = GridFunction::from_values(grid, scaled.into_iter().last().unwrap(), 0.0, 0.0)?;
    Ok(MorseReport {
        rows,
        negative_region,
        limsup_proxy,
        growth_slope,
        decay,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumRow {
    pub k: u32,
    /// Sup distance between the CDFs of `beta_k` and `theta_{P(phi)} / vol`.
    pub cdf_distance: f64,
    /// `|E_k(phi) - E_theta(P(phi))|`.
    pub energy_error: f64,
}

/// Index from which a column strictly decreases, if it ends decreasing.
pub fn decreasing_from(col: &[f64]) -> Option<usize> {
    if col.len() < 2 {
        return None;
    }
    let mut i = col.len() - 1;
    while i > 0 && col[i] < col[i - 1] {
        i -= 1;
    }
    (i + 1 < col.len()).then_some(i)
}

pub fn equilibrium_report(model: &PolarizedModel, phi: &GridFunction, k_list: &[u32]) -> Result<Vec<EquilibriumRow>> {
    let (p_env, _) = envelope(model, phi)?;
    let e_theta = ma_energy(model, &p_env)?;
    let eq_cdf = slope_cdf(&model.potential(p_env.function())?);
    k_list
        .par_iter()
        .map(|&k| {
            let space = SectionSpace::new(model, k, 0)?;
            let beta = bergman_density(&space, phi, true)?;
            let cdf_distance = beta
                .cdf()
                .iter()
                .zip(&eq_cdf)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let energy_error = (quantized_energy(&space, phi)? - e_theta).abs();
            Ok(EquilibriumRow {
                k,
                cdf_distance,
                energy_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::sech;
    use crate::radial::Grid;

    fn model2() -> PolarizedModel {
        PolarizedModel::fubini_study(Grid::default(), 2).unwrap()
    }

    #[test]
    fn fs_zero_weight_clauses() {
        let model = model2();
        let r = morse_report(&model, &GridFunction::zero(*model.grid()), &[4, 8, 16], 0).unwrap();
        assert!(r.negative_region.iter().all(|b| !b));
        assert!(r.decay.is_none());
        for row in &r.rows {
            // (1/k) (2k - 1) exactly: the adjoint FS density is balanced.
            let want = (2.0 * row.k as f64 - 1.0) / row.k as f64;
            assert!((row.scaled_sup - want).abs() < 1e-8, "{} vs {want}", row.scaled_sup);
            assert!(row.domination_residual <= 1e-12);
        }
    }

    #[test]
    fn concave_well_decays() {
        let model = model2();
        let phi = GridFunction::from_fn(*model.grid(), |s| 1.2 * sech(s), 0.0, 0.0).unwrap();
        let r = morse_report(&model, &phi, &[8, 16, 32], 1).unwrap();
        assert!(r.negative_region.iter().any(|b| *b));
        let (c, r2) = r.decay.unwrap();
        assert!(c > 0.0 && r2 > 0.95, "{c} {r2}");
        assert!(r.max_domination_residual() <= DOMINATION_TOL);
        assert!(r.rows.iter().all(|row| row.twisted.unwrap().ratio.is_finite()));
    }

    #[test]
    fn fs_equilibrium_is_exact() {
        let model = model2();
        for c in [0.0, 0.7] {
            let rows = equilibrium_report(&model, &GridFunction::constant(*model.grid(), c), &[2, 8]).unwrap();
            for row in rows {
                assert!(row.cdf_distance < 1e-8, "{}", row.cdf_distance);
                assert!(row.energy_error < 1e-12);
            }
        }
    }

    #[test]
    fn decreasing_tail() {
        assert_eq!(decreasing_from(&[1.0, 3.0, 2.0, 1.0]), Some(1));
        assert_eq!(decreasing_from(&[1.0, 2.0]), None);
        assert_eq!(decreasing_from(&[3.0, 2.0]), Some(0));
    }
}
