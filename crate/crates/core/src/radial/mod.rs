//! Grids, convex analysis and weighted integration in the log-radial
//! coordinate.

pub mod grid;
pub mod legendre;
pub mod measure;
pub mod quadrature;

pub use grid::{ConvexPotential, DualGrid, DualGridFunction, Grid, GridFunction};
pub use legendre::{biconjugate, constrained_convex_envelope, legendre_dual, legendre_primal};
pub use measure::{pair_measure, slope_cdf, slope_measure, SlopeMeasure};
pub use quadrature::log_weighted_integral;
