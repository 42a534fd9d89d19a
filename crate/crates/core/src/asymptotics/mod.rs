//! Large-`k` machinery: ambient kernels and peak sections, the Bergman kernel
//! comparison with an ample twist, local Morse inequalities and the
//! convergence of Bergman measures and energies at equilibrium.

pub mod comparison;
pub mod kernel;
pub mod morse;

pub use comparison::{comparison_ratio, fs_ratio, Comparison};
pub use kernel::{
    ambient_kernel, cauchy_schwarz_excess, expansion_fit, peak_constants, peak_extension, phase_excess, AmbientKernel,
    AmbientMetric, ExpansionFit,
};
pub use morse::{decreasing_from, equilibrium_report, morse_report, EquilibriumRow, MorseReport, MorseRow, TwistedMorse};

/// Least squares `y ~ slope x + intercept`; returns `(slope, intercept, R^2)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

#[cfg(test)]
mod tests {
    #[test]
    fn regression_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b, r2) = super::linear_regression(&x, &y);
        assert!((a + 0.5).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
