use thiserror::Error;

/// Errors raised by format construction, arithmetic preconditions and the
/// simulation/profiling drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid format descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("invalid fixed format: {0}")]
    InvalidFixedFormat(String),

    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },

    #[error("no flexible bit left to move into the exponent (k = fx = {0})")]
    ExponentSaturated(u32),

    #[error("exponent already uses only its fixed bits (k = 0)")]
    ExponentAtMinimum,

    #[error("total width mismatch: value has {from} bits, target descriptor has {to}")]
    WidthMismatch { from: u32, to: u32 },

    #[error("operands use different descriptors ({0} vs {1})")]
    DescriptorMismatch(String, String),

    #[error("malformed field value: {0}")]
    MalformedValue(String),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),

    #[error("error reports were produced from different sweeps")]
    SweepMismatch,

    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),

    #[error("CFL condition violated: courant number {0:.4} >= 1")]
    Cfl(f64),

    #[error("runs cannot be compared: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
