use thiserror::Error;

/// Which affine tail of an integrand failed to decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Left,
    Right,
}

impl std::fmt::Display for Tail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tail::Left => f.write_str("left"),
            Tail::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at node {index} (s = {s})")]
    NonFiniteSample { index: usize, s: f64 },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("convexity violated at node {index}: second difference {value:e} below tolerance {tol:e}")]
    NotConvex { index: usize, value: f64, tol: f64 },

    #[error("slope window violated: {0}")]
    SlopeWindow(String),

    #[error("negative slope-measure mass {mass:e} in cell {cell}")]
    NegativeMass { cell: usize, mass: f64 },

    #[error("Legendre transform diverges at interior dual node {index} (xi = {xi})")]
    DualDivergence { index: usize, xi: f64 },

    #[error("integrand not integrable on the {tail} tail (exponent slope {slope})")]
    Integrability { tail: Tail, slope: f64 },

    #[error("weight is not bounded: asymptotic slopes ({left}, {right}) must both vanish")]
    Unbounded { left: f64, right: f64 },

    #[error("weight is not certified theta-psh")]
    Uncertified,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no sections: d*k + m = {0} < 2")]
    NoSections(i64),

    #[error("Bergman mass {mass} deviates from {expected} (relative {rel:e}); refine the grid")]
    QuadratureResolution { mass: f64, expected: f64, rel: f64 },

    #[error("zero coefficient vector")]
    ZeroCoefficients,

    #[error("Kähler condition violated at node {index}: curvature {value:e}")]
    NotKahler { index: usize, value: f64 },

    #[error("ill-conditioned expansion fit (condition number {0:e}); use larger p")]
    IllConditioned(f64),

    #[error("{what}: {lhs} vs {rhs} differ by {diff:e} > {tol:e}")]
    Disagreement {
        what: &'static str,
        lhs: f64,
        rhs: f64,
        diff: f64,
        tol: f64,
    },

    #[error("geodesic resolution failure: {0}")]
    Resolution(String),

    #[error("comparison theorem violated: max ratio {max_ratio} > bound {bound}")]
    ComparisonViolation { max_ratio: f64, bound: f64 },

    #[error("Morse clause ({clause}) violated: {detail}")]
    MorseClause { clause: char, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
