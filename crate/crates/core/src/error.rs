use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not converge: {0}")]
    Convergence(String),

    /// The sample eigenvalue lies at or below the image boundary ψ(S_ψ).
    #[error("{value} is not a distant spike: it does not exceed the boundary psi(S_psi) = {threshold}")]
    NotDistantSpike { value: f64, threshold: f64 },

    #[error("evaluation point {x} is within the pole tolerance of sample eigenvalue {pole}")]
    Separation { x: f64, pole: f64 },

    #[error("the lambda method requires an estimated psi model")]
    MissingModel,

    #[error("sample eigenvalues {index} and {next} are tied; spikes must have multiplicity one", next = index + 1)]
    Tie { index: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("requested {requested} components but the numerical rank is {rank}")]
    Rank { requested: usize, rank: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("problem exceeds the dense computation budget: {0}")]
    Budget(String),

    #[error("iteration limit reached: {0}")]
    Iteration(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget(_) => 4,
            Error::NotDistantSpike { .. }
            | Error::Domain(_)
            | Error::Convergence(_)
            | Error::Separation { .. }
            | Error::MissingModel
            | Error::Tie { .. }
            | Error::Solver(_)
            | Error::Rank { .. }
            | Error::Iteration(_) => 3,
            Error::Data(_)
            | Error::Dimension { .. }
            | Error::Input(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
        }
    }
}
