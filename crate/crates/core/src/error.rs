use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of the arguments do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input contains NaN or an infinity.
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    /// `F_{k+1} x_{k+1} = C_k x_k + f_k` has no solution.
    #[error("infeasible step k={step}: residual {residual:e}")]
    InfeasibleStep { step: usize, residual: f64 },

    /// `F_0 x_0 = q` has no solution.
    #[error("infeasible initial condition: residual {0:e}")]
    InfeasibleInitial(f64),

    /// The measurement record is inconsistent with the disturbance budget,
    /// i.e. the set of compatible states is empty.
    #[error("measurement record incompatible with the uncertainty set (slack {0:e})")]
    EmptyPosteriorSet(f64),

    /// The discretized boundary value problem is singular.
    #[error("ill-posed boundary value problem: {0}")]
    IllPosed(String),

    /// Malformed model or measurement file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A precondition of the operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::NotPositiveDefinite
                | Error::InfeasibleStep { .. }
                | Error::InfeasibleInitial(_)
                | Error::EmptyPosteriorSet(_)
                | Error::IllPosed(_)
        )
    }
}
