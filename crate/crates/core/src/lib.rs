//! Radial Kähler quantization on `P^1`.
//!
//! Everything is reduced to the log-radial coordinate `s = log|z|^2` for the
//! line bundle `O(d)` with S^1-invariant metrics. Potentials are convex
//! functions of `s` with slopes in `[0, d]`, Monge-Ampère measures are
//! Stieltjes measures of their slopes, and the Gram matrix of monomial
//! sections is diagonal, so every object reduces to one-dimensional
//! quadrature and convex analysis.
//!
//! Modules, bottom up:
//!
//! * [`radial`]: grids, Legendre transforms, envelopes, slope measures and
//!   log-domain integration.
//! * [`pluripotential`]: the model, weights, `P_theta`, Monge-Ampère measures
//!   and the energy `E_theta`.
//! * [`sections`]: Hilbert forms, the quantized energy `E_k` and Bergman
//!   densities.
//! * [`geodesics`]: weak geodesics by Legendre interpolation and the energy
//!   identities along them.
//! * [`asymptotics`]: ambient kernels, peak sections, the comparison theorem,
//!   Morse inequalities and equilibrium convergence.
//!
//! [`invariants`] evaluates the structural identities on given data.

pub mod asymptotics;
pub mod error;
pub mod families;
pub mod geodesics;
pub mod invariants;
pub mod pluripotential;
pub mod radial;
pub mod sections;

pub use error::{Error, Result};

pub use geodesics::GeodesicPath;
pub use pluripotential::{ContactReport, PolarizedModel, Weight};
pub use radial::{ConvexPotential, DualGrid, DualGridFunction, Grid, GridFunction, SlopeMeasure};
pub use sections::{BergmanDensity, HilbertForm, SectionSpace};

