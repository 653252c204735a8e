use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group domain needs at least two distinct labels, got {0:?}")]
    GroupDomain(Vec<String>),
    #[error("group index {index} out of range for a domain of {size} groups")]
    GroupOutOfRange { index: usize, size: usize },
    #[error("unit index {index} out of range for {n} units")]
    UnitOutOfRange { index: usize, n: usize },
    #[error("unit {unit}: neighbor pattern has length {got}, expected {expected}")]
    PatternLength { unit: usize, got: usize, expected: usize },
    #[error("allocation vector has length {got}, expected {expected}")]
    AllocationLength { got: usize, expected: usize },
    #[error("invalid unit {unit}: {reason}")]
    InvalidUnit { unit: String, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("unit {0} has no coordinates")]
    MissingCoordinates(String),
    #[error("neighborhood size must be positive and at most {n}, got {k}")]
    NeighborhoodSize { k: usize, n: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("neighborhood size {k} exceeds the pattern enumeration cap of {cap}")]
    PatternCap { k: usize, cap: usize },
    #[error("model evaluation failed for unit {unit}, pattern {pattern}: {reason}")]
    ModelEvaluation { unit: usize, pattern: usize, reason: String },
    #[error("variable {index} has non-integral value {value}")]
    NonIntegral { index: usize, value: f64 },
    #[error("inconsistent selector for unit {unit}: {reason}")]
    InconsistentSelector { unit: usize, reason: String },
    #[error("variable vector has length {got}, program has {expected} variables")]
    VariableCount { got: usize, expected: usize },
    #[error("variable {0} fixed more than once")]
    DuplicateFix(usize),
    #[error("simplex exceeded {0} iterations without converging")]
    IterationLimit(usize),
    #[error("basis matrix became numerically singular")]
    SingularBasis,
    #[error("group {group}: too few units for the fit ({count} < {needed})")]
    TooFewUnits { group: String, count: usize, needed: usize },
    #[error("group {group}: design matrix is rank deficient; collinear regressors: {regressors:?}")]
    RankDeficient { group: String, regressors: Vec<String> },
    #[error("invalid fit data: {0}")]
    FitData(String),
    #[error("enumeration guard exceeded: {0}")]
    EnumerationGuard(String),
    #[error("invalid tau grid: {0}")]
    TauGrid(String),
    #[error("solution has no incumbent allocation")]
    NoIncumbent,
    #[error("{0}")]
    Io(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown synthetic kind {0:?}")]
    UnknownKind(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
