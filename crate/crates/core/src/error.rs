use std::fmt;

/// One problem found while validating a model description.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelIssue {
    /// `C_ii` differs from `-(sum_{j != i} C_ij + sum_j D_ij)` by more than the tolerance.
    NonConservativeRows { row: usize, defect: f64 },
    /// `C + D` is not irreducible; `unreachable` lists states not reachable from state 0
    /// or that cannot reach it.
    Reducible { unreachable: Vec<usize> },
    /// `v(i) == 0`.
    ZeroRate { state: usize },
    /// A jump law is malformed or inconsistent with `D`.
    BadMixture { from: usize, to: usize, reason: String },
    /// Negative off-diagonal `C`, negative `D`, non-finite entries or wrong shapes.
    BadRates { reason: String },
}

impl ModelIssue {
    pub fn code(&self) -> &'static str {
        match self {
            ModelIssue::NonConservativeRows { .. } => "NonConservativeRows",
            ModelIssue::Reducible { .. } => "Reducible",
            ModelIssue::ZeroRate { .. } => "ZeroRate",
            ModelIssue::BadMixture { .. } => "BadMixture",
            ModelIssue::BadRates { .. } => "BadRates",
        }
    }
}

impl fmt::Display for ModelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelIssue::NonConservativeRows { row, defect } => {
                write!(f, "row {row}: C_ii violates the conservation identity by {defect:e}")
            }
            ModelIssue::Reducible { unreachable } => {
                write!(f, "C + D is reducible; states {unreachable:?} are not strongly connected to state 0")
            }
            ModelIssue::ZeroRate { state } => write!(f, "state {state}: drift rate v is zero"),
            ModelIssue::BadMixture { from, to, reason } => {
                write!(f, "jump law ({from},{to}): {reason}")
            }
            ModelIssue::BadRates { reason } => write!(f, "{reason}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {}", format_issues(.0))]
    InvalidModel(Vec<ModelIssue>),
    #[error("could not parse model file: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("linear system is numerically singular ({0})")]
    SingularSolve(&'static str),
    #[error("theta = {theta} is at or beyond the mgf abscissa {abscissa}")]
    AbscissaExceeded { theta: f64, abscissa: f64 },
    #[error("spectral abscissa of the matrix argument ({abscissa}) is not below jump rate {rate}")]
    SpectralClash { abscissa: f64, rate: f64 },
    #[error("no state has negative drift rate")]
    EmptyMinus,
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("mean drift {drift} is positive; the eigenvector of K at 0 is not guaranteed")]
    DriftPositive { drift: f64 },
    #[error("mean drift {drift} is not negative")]
    DriftNonNegative { drift: f64 },
    #[error("kappa(theta) stays negative on the admissible interval up to {searched_to}")]
    NoRoot { searched_to: f64 },
    #[error("theta = {theta} outside the admissible interval [0, {bound})")]
    DomainExceeded { theta: f64, bound: f64 },
    #[error("singular block matrix: {0}")]
    SingularBlock(&'static str),
    #[error("state {state} is not in S-")]
    NotMinusState { state: usize },
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("horizon {xmax} is shorter than 5/alpha = {needed}")]
    HorizonTooShort { xmax: f64, needed: f64 },
    #[error("model has jump transitions (D != 0)")]
    HasJumps,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn format_issues(issues: &[ModelIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Short machine-readable name used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModel(issues) => issues.first().map(|i| i.code()).unwrap_or("InvalidModel"),
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::SingularSolve(_) => "SingularSolve",
            Error::AbscissaExceeded { .. } => "AbscissaExceeded",
            Error::SpectralClash { .. } => "SpectralClash",
            Error::EmptyMinus => "EmptyMinus",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DriftPositive { .. } => "DriftPositive",
            Error::DriftNonNegative { .. } => "DriftNonNegative",
            Error::NoRoot { .. } => "NoRoot",
            Error::DomainExceeded { .. } => "DomainExceeded",
            Error::SingularBlock(_) => "SingularBlock",
            Error::NotMinusState { .. } => "NotMinusState",
            Error::BadGrid(_) => "BadGrid",
            Error::HorizonTooShort { .. } => "HorizonTooShort",
            Error::HasJumps => "HasJumps",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    /// Input problems (parse/validation) as opposed to computation failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_) | Error::Parse(_) | Error::Io(_) | Error::InvalidArgument(_) | Error::BadGrid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
