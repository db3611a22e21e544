use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// `Q = 1/q1 + 1/q2` outside the open interval `(1, 2)`.
    #[error("parameters out of region: Q = {q} not in (1, 2)")]
    OutOfRegion { q: f64 },

    /// A derived exponent sits on (or within tolerance of) a boundary the
    /// limit theory excludes.
    #[error("boundary parameter: {what} = {value} within {tol} of excluded value")]
    BoundaryParameter {
        what: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Kernel evaluation requested at the origin, where `rho = 0`.
    #[error("singular origin: kernel undefined at u = 0")]
    SingularOrigin,

    /// The sampled function fails generalized homogeneity, so it has no
    /// polar representation.
    #[error("inconsistent homogeneity: max relative deviation {max_dev} exceeds {tol}")]
    InconsistentHomogeneity { max_dev: f64, tol: f64 },

    /// Truncation tail estimate too large relative to the returned value.
    #[error("truncation dominates: tail bound {tail} vs value {value}")]
    TruncationDominates { tail: f64, value: f64 },

    #[error("quadrature not converged: last relative change {change} above {tol}")]
    QuadratureNotConverged { change: f64, tol: f64 },

    /// A limit family was requested outside the parameter region where its
    /// defining integral is finite.
    #[error("family {family} not defined in region {region}")]
    FamilyNotDefinedInRegion { family: String, region: String },

    /// Covariance matrix failed to factor even with the permitted jitter.
    #[error("covariance matrix not positive semidefinite (jitter {jitter} needed)")]
    NotPsd { jitter: f64 },

    #[error("rectangle ({n1}, {n2}) exceeds field grid ({g1}, {g2})")]
    RectangleExceedsGrid {
        n1: usize,
        n2: usize,
        g1: usize,
        g2: usize,
    },

    #[error("allocation of {bytes} bytes exceeds ceiling {ceiling}")]
    AllocationTooLarge { bytes: usize, ceiling: usize },

    /// Direction scan found no direction with clearly slower decay.
    #[error("no separation: exponent spread {spread} below margin {margin}")]
    NoSeparation { spread: f64, margin: f64 },

    /// The scanned function vanished at every sampled lattice point.
    #[error("function vanished at all sampled points along direction ({0}, {1})")]
    ZeroValue(f64, f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::OutOfRegion { .. }
            | Error::BoundaryParameter { .. }
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
