use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Error, Debug)]
pub enum RwError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains non-finite entries ({0})")]
    InvalidField(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid coefficient profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("grid Nyquist too coarse: need n >= {required_n}, have {have_n}")]
    Nyquist { required_n: usize, have_n: usize },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("Krylov propagator did not converge: achieved residual {residual:.3e} (target {target:.3e})")]
    KrylovNoConvergence { residual: f64, target: f64 },

    #[error("quadrature budget exceeded: estimated tail fraction {tail:.3e} above {limit:.3e}")]
    QuadratureBudget { tail: f64, limit: f64 },

    #[error("dense route infeasible: {dof} degrees of freedom exceeds limit {limit}")]
    DenseTooLarge { dof: usize, limit: usize },

    #[error("adjoint inconsistency: pairing defect {defect:.3e} above gate {gate:.3e}")]
    AdjointInconsistent { defect: f64, gate: f64 },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, RwError>;
