use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit together.
    Shape {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A matrix that must be symmetric is not.
    NotSymmetric { max_asymmetry: f64 },
    /// A matrix that must be positive definite has a non-positive eigenvalue.
    NotPositiveDefinite { min_eigenvalue: f64 },
    NonFinite(&'static str),
    /// `A = 0` is not a valid system.
    ZeroMatrix,
    /// The least-squares residual of `Ax = b` exceeds the tolerance.
    Inconsistent { residual: f64, tol: f64 },
    /// A probability vector or partition failed validation.
    InvalidDistribution(&'static str),
    /// `W` has an eigenvalue outside `[0, 1]`.
    SpectrumOutOfRange { eigenvalue: f64 },
    /// `E[Z]` vanished: no direction is ever sampled.
    DegenerateDistribution,
    /// A scalar parameter lies outside the domain of the operation.
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// `K1 + K2 >= 1`: the recurrence bound gives no contraction.
    Infeasible { k1: f64, k2: f64 },
    /// Every cell of a parameter grid was infeasible.
    NoFeasiblePoint,
    /// `round(c * tau) < tau`.
    InfeasibleSchedule { tau: usize, delta_a: usize },
    /// Not enough data to estimate a rate.
    InsufficientData(&'static str),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            reason,
        }
    }

    /// True for failures that stem from the numbers (infeasible bounds,
    /// degenerate spectra) rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::NoFeasiblePoint
                | Error::DegenerateDistribution
                | Error::SpectrumOutOfRange { .. }
                | Error::Inconsistent { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                op,
                expected,
                found,
            } => write!(
                f,
                "{op}: shape mismatch, expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max |m_ij - m_ji| = {max_asymmetry:e})")
            }
            Error::NotPositiveDefinite { min_eigenvalue } => write!(
                f,
                "matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})"
            ),
            Error::NonFinite(what) => write!(f, "{what} contains NaN or infinite entries"),
            Error::ZeroMatrix => f.write_str("system matrix A must be nonzero"),
            Error::Inconsistent { residual, tol } => write!(
                f,
                "linear system is inconsistent: least-squares residual {residual:e} exceeds {tol:e}"
            ),
            Error::InvalidDistribution(why) => write!(f, "invalid sketch distribution: {why}"),
            Error::SpectrumOutOfRange { eigenvalue } => write!(
                f,
                "eigenvalue {eigenvalue} of W lies outside [0, 1]; distribution and geometry are inconsistent"
            ),
            Error::DegenerateDistribution => {
                f.write_str("E[Z] is zero: the distribution never samples a useful direction")
            }
            Error::Domain {
                name,
                value,
                reason,
            } => write!(f, "parameter {name} = {value} is out of range: {reason}"),
            Error::Infeasible { k1, k2 } => write!(
                f,
                "bound infeasible: K1 + K2 = {} >= 1 (K1 = {k1}, K2 = {k2})",
                k1 + k2
            ),
            Error::NoFeasiblePoint => f.write_str("no feasible (theta, omega) cell in the grid"),
            Error::InfeasibleSchedule { tau, delta_a } => write!(
                f,
                "cannot give {tau} workers at least one update each in {delta_a} updates per interval"
            ),
            Error::InsufficientData(why) => write!(f, "insufficient data: {why}"),
        }
    }
}

impl core::error::Error for Error {}
