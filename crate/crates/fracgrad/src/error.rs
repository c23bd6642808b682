//! Crate-wide error type. Variants carry enough context to name the
//! offending shapes, columns, or iterations in the message.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Two operands whose shapes do not compose for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An index past the end of the named axis.
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    /// Gamma evaluated at (or within tolerance of) a non-positive integer.
    GammaPole { x: f64 },
    /// A fractional order outside (0, 1].
    InvalidOrder { alpha: f64 },
    /// A malformed cell or row in an input CSV.
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },
    /// A column name that is absent from the header.
    MissingColumn { name: String },
    /// A column whose training-range min equals its max, so min-max
    /// scaling has no well-defined inverse.
    DegenerateColumn { name: String },
    /// A configuration value that cannot produce a valid run.
    Config { message: String },
    /// An operation invoked against a tape or store in the wrong state.
    State { message: String },
    /// A non-finite loss or iterate; reports where the run broke down.
    Divergence {
        alpha: f64,
        lr: f64,
        iteration: usize,
    },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: shapes {}x{} and {}x{} do not compose",
                left.0, left.1, right.0, right.1
            ),
            Error::IndexOutOfRange { what, index, bound } => {
                write!(f, "{what} index {index} out of range (bound {bound})")
            }
            Error::GammaPole { x } => {
                write!(f, "gamma undefined at {x} (pole at non-positive integer)")
            }
            Error::InvalidOrder { alpha } => {
                write!(f, "fractional order {alpha} outside (0, 1]")
            }
            Error::Parse {
                path,
                row,
                col,
                message,
            } => write!(f, "{path}: row {row}, column {col}: {message}"),
            Error::MissingColumn { name } => write!(f, "label column {name:?} not found"),
            Error::DegenerateColumn { name } => write!(
                f,
                "column {name:?} is constant on the training range; min-max scale is degenerate"
            ),
            Error::Config { message } => write!(f, "invalid configuration: {message}"),
            Error::State { message } => write!(f, "invalid state: {message}"),
            Error::Divergence {
                alpha,
                lr,
                iteration,
            } => write!(
                f,
                "training diverged at iteration {iteration} (alpha {alpha}, lr {lr}): non-finite loss"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
