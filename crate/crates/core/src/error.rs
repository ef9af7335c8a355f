use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the tensor engine, the ranking modules and the metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand extents do not agree.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A tensor was built from a shape whose product does not match its data.
    Layout { shape: Vec<usize>, len: usize },
    /// Reduction axis outside the tensor rank.
    Axis { axis: usize, rank: usize },
    /// A frame without any detected object reached a module.
    EmptyFrame,
    /// A NaN or infinity appeared where finite values are required.
    NonFinite(&'static str),
    /// Backward was started from a tensor with more than one element.
    NotScalar { len: usize },
    /// Ranks are not a permutation of `1..=n`.
    InvalidRanks(String),
    /// The instance ids of a map and of its rank table differ.
    IdMismatch(String),
    /// Fewer than two objects were given to a pairwise objective.
    TooFewObjects { n: usize },
    /// An instance mask or rank map disagrees with its peers in size.
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A configuration value is out of range.
    Config(String),
    /// Training produced a non-finite loss.
    Diverged { iteration: usize, loss: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Layout { shape, len } => {
                write!(f, "shape {shape:?} does not describe {len} elements")
            }
            Error::Axis { axis, rank } => write!(f, "axis {axis} out of range for rank {rank}"),
            Error::EmptyFrame => f.write_str("frame has no detected objects"),
            Error::NonFinite(ctx) => write!(f, "non-finite value in {ctx}"),
            Error::NotScalar { len } => {
                write!(f, "backward requires a scalar output, got {len} elements")
            }
            Error::InvalidRanks(msg) => write!(f, "invalid ranks: {msg}"),
            Error::IdMismatch(msg) => write!(f, "instance ids disagree: {msg}"),
            Error::TooFewObjects { n } => write!(f, "need at least two objects, got {n}"),
            Error::Dimension { expected, found } => write!(
                f,
                "expected {}x{} map, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Diverged { iteration, loss } => {
                write!(
                    f,
                    "training diverged at iteration {iteration} (loss = {loss})"
                )
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
