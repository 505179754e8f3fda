use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-positive coefficient: {field} = {value:e} at (s, y) = ({s}, {y})")]
    NonPositiveCoefficient {
        field: &'static str,
        value: f64,
        s: f64,
        y: f64,
    },

    #[error("constraint breach at {location}: boundary {value:.12} vs limit {limit:.12}")]
    ConstraintBreach {
        location: String,
        value: f64,
        limit: f64,
    },

    #[error("singular denominator in boundary equation at {0}")]
    SingularDenominator(String),

    #[error("step error: Richardson estimate {estimate:e} exceeds {tolerance:e} at {at}")]
    StepError {
        estimate: f64,
        tolerance: f64,
        at: f64,
    },

    #[error("resolution warning: two sign changes within one cell near {0}")]
    Resolution(f64),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("underdetermined reflection region: {0}")]
    UnderdeterminedRegion(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
