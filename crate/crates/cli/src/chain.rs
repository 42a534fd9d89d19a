//! The inequality chain behind the lower bound `E_k(u) - E_theta(u) >= -o(1)`.
//!
//! Along the geodesic `u_t` from `0` to `u <= 0`:
//!
//! ```text
//! F_k(u) = E_k(u) - E_theta(u)
//!        >= d/dt E_k(u_t) - d/dt E_theta(u_t)             (convexity of F_k along the geodesic)
//!        >= int u'_0 beta_{k,0} - (1/d) int u'_0 theta_0   (MA energy variation estimate)
//!        >= int u'_0 M_k - (1/d) int u'_0 theta_0          (twisted majorant, m >= 1)
//! ```
//!
//! `M_k = (1 + C/m)^2 (k/N_k) (1 + delta_k) omega_eps` with `omega_eps` the
//! density of `theta_0 + (m/k) omega_FS` and `1 + delta_k` the measured sup
//! of `B_{k,m} / (k omega_eps)`. The comparison theorem gives
//! `B_{k,0} <= (1 + C/m)^2 B_{k,m}`, so `M_k >= beta_{k,0}` pointwise, and
//! `u'_0 <= 0` turns that into the last link.

use kqlab_core::asymptotics::comparison_ratio;
use kqlab_core::families::logistic_density;
use kqlab_core::geodesics::{
    initial_tangent, ma_energy_initial_slope, make_geodesic, qma_initial_derivative, richardson_steps,
};
use kqlab_core::pluripotential::ma_energy;
use kqlab_core::radial::quadrature::Compensated;
use kqlab_core::sections::{bergman_density, quantized_energy};
use kqlab_core::{GridFunction, PolarizedModel, SectionSpace, Weight};

use crate::error::{LabError, LabResult};

/// Relative slack allowed on every link, in units of `osc(u)`.
pub const CHAIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub name: &'static str,
    /// Left member minus right member.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub k: u32,
    pub m: u32,
    pub tol: f64,
    /// `F_k(u)`.
    pub gap: f64,
    /// `d/dt E_k - d/dt E_theta` at `t = 0`.
    pub bracket: f64,
    /// `int u'_0 (beta_{k,0} - theta_0 / d)`.
    pub pairing: f64,
    /// The twisted rightmost member, `m >= 1` only.
    pub twisted: Option<f64>,
    /// `1 + delta_k`, `m >= 1` only.
    pub morse_ratio: Option<f64>,
    pub links: Vec<Link>,
}

impl ChainRecord {
    /// The rightmost member actually reached.
    pub fn lower_bound(&self) -> f64 {
        self.twisted.unwrap_or(self.pairing)
    }

    pub fn worst_slack(&self) -> f64 {
        self.links.iter().map(|l| l.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn verify(&self) -> LabResult<()> {
        match self.links.iter().find(|l| l.slack < -self.tol) {
            Some(l) => Err(LabError::ChainViolation {
                link: l.name,
                k: self.k,
                m: self.m,
                slack: l.slack,
                tol: self.tol,
            }),
            None => Ok(()),
        }
    }
}

/// `int f p ds` with the same trapezoid and frozen tails as the Bergman pairing.
fn pair_density(p: &[f64], f: &GridFunction) -> f64 {
    let fv = f.values();
    let h = f.grid().h();
    let n = p.len();
    let mut acc = Compensated::default();
    for i in 0..n {
        let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
        acc.add(w * fv[i] * p[i]);
    }
    acc.add(fv[0] * p[0]);
    acc.add(fv[n - 1] * p[n - 1]);
    acc.total()
}

/// Evaluates every member of the chain for `u <= 0` and records the links.
/// `c_hat` is the comparison constant of the twist (0 for Fubini-Study).
/// The record is returned even when a link fails; call
/// [`ChainRecord::verify`] to turn a violation into an error.
pub fn key_estimate_chain(model: &PolarizedModel, u: &Weight, k: u32, m: u32, c_hat: f64) -> LabResult<ChainRecord> {
    let uf = u.function();
    if uf.max() > 0.0 {
        return Err(LabError::Config(format!("chain needs u <= 0, got max {}", uf.max())));
    }
    if !u.is_certified() {
        return Err(kqlab_core::Error::Uncertified.into());
    }
    // Roundoff floor so that constant weights, where every member is 0, tie.
    let tol = CHAIN_TOL * uf.osc() + 1e-12 * (1.0 + uf.min().abs());

    let zero = Weight::zero(model);
    let path = make_geodesic(model, &zero, u)?;
    let space = SectionSpace::new(model, k, m)?;

    let gap = quantized_energy(&space, uf)? - ma_energy(model, u)?;
    let (d_ek, qma_pairing) = qma_initial_derivative(&path, &space)?;
    let (_, energy_pairing) = ma_energy_initial_slope(&path)?;
    // Same one-sided Richardson quotient as for E_k. The chord would assume
    // exact affinity, which the discrete path only has up to O(h) near t = 0.
    let (t1, t2) = richardson_steps(model.grid());
    let e_theta = |t: f64| -> LabResult<f64> { Ok(ma_energy(model, &path.evaluate(t)?)?) };
    let (d1, d2) = (e_theta(t1)? / t1, e_theta(t2)? / t2);
    let d_etheta = (t1 * d2 - t2 * d1) / (t1 - t2);
    let bracket = d_ek - d_etheta;
    let pairing = qma_pairing - energy_pairing;

    let mut links = vec![
        Link {
            name: "convexity",
            slack: gap - bracket,
        },
        Link {
            name: "variation",
            slack: bracket - pairing,
        },
    ];

    let (twisted, morse_ratio) = if m >= 1 {
        let tangent = initial_tangent(&path)?;
        let kf = k as f64;
        let eps = m as f64 / kf;
        let plain = SectionSpace::new(model, k, 0)?;
        let n0 = plain.dim() as f64;
        // Certifies B_{k,0} <= (1 + C/m)^2 B_{k,m} on the grid.
        let cmp = comparison_ratio(model, &GridFunction::zero(*model.grid()), k, m, c_hat)?;

        let twisted_density = bergman_density(&space, &GridFunction::zero(*model.grid()), false)?;
        let omega: Vec<f64> = model
            .curvature()
            .iter()
            .zip(model.grid().nodes())
            .map(|(c, s)| c + eps * logistic_density(s))
            .collect();
        let ratio = twisted_density
            .density
            .values()
            .iter()
            .zip(&omega)
            .map(|(b, w)| b / (kf * w))
            .fold(f64::NEG_INFINITY, f64::max);
        let scale = cmp.bound * (kf / n0) * ratio;
        let majorant: Vec<f64> = omega.iter().map(|w| scale * w).collect();
        let plain_density = bergman_density(&plain, &GridFunction::zero(*model.grid()), true)?;
        let beta_pair = pair_density(plain_density.density.values(), &tangent);
        let rhs = pair_density(&majorant, &tangent) - energy_pairing;
        links.push(Link {
            name: "majorant",
            slack: beta_pair - energy_pairing - rhs,
        });
        (Some(rhs), Some(ratio))
    } else {
        (None, None)
    };

    Ok(ChainRecord {
        k,
        m,
        tol,
        gap,
        bracket,
        pairing,
        twisted,
        morse_ratio,
        links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kqlab_core::families::{softplus, SoftMax};
    use kqlab_core::Grid;

    fn grid() -> Grid {
        Grid::new(-30.0, 30.0, 2001).unwrap()
    }

    fn shifted_regression(model: &PolarizedModel) -> Weight {
        let lse = SoftMax::new(vec![(0.0, 0.0), (2.0, -2.0)], 1.0).unwrap();
        let f = GridFunction::from_fn(*model.grid(), |s| 0.5 * (lse.value(s) - 2.0 * softplus(s)), 0.0, 0.0).unwrap();
        let top = f.max();
        Weight::certified(model, f.shifted(-top)).unwrap()
    }

    #[test]
    fn constant_weight_ties() {
        let model = PolarizedModel::fubini_study(grid(), 2).unwrap();
        let u = Weight::certified(&model, GridFunction::constant(grid(), -0.7)).unwrap();
        for m in [0, 1] {
            let rec = key_estimate_chain(&model, &u, 8, m, 0.0).unwrap();
            for v in [rec.gap, rec.bracket, rec.pairing] {
                assert!(v.abs() < 1e-9, "{rec:?}");
            }
            rec.verify().unwrap();
        }
    }

    #[test]
    fn regression_weight_chain_holds() {
        let model = PolarizedModel::fubini_study(grid(), 2).unwrap();
        let u = shifted_regression(&model);
        for m in [0, 2] {
            let rec = key_estimate_chain(&model, &u, 16, m, 0.0).unwrap();
            rec.verify().unwrap();
            assert_eq!(rec.links.len(), if m == 0 { 2 } else { 3 });
            assert!(rec.lower_bound() <= rec.gap);
        }
    }

    #[test]
    fn positive_weight_is_rejected() {
        let model = PolarizedModel::fubini_study(grid(), 1).unwrap();
        let u = Weight::certified(&model, GridFunction::constant(grid(), 0.1)).unwrap();
        assert!(key_estimate_chain(&model, &u, 4, 0, 0.0).is_err());
    }

    #[test]
    fn violation_names_the_link() {
        let rec = ChainRecord {
            k: 8,
            m: 0,
            tol: 1e-9,
            gap: 0.0,
            bracket: 1.0,
            pairing: 0.0,
            twisted: None,
            morse_ratio: None,
            links: vec![Link { name: "convexity", slack: -1.0 }, Link { name: "variation", slack: 1.0 }],
        };
        match rec.verify() {
            Err(LabError::ChainViolation { link, .. }) => assert_eq!(link, "convexity"),
            other => panic!("{other:?}"),
        }
    }
}
