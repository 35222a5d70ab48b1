use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for axis {axis} of length {len}")]
    IndexOutOfRange {
        axis: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite rate at cell ({}, {}, {}): linear predictor {eta}", cell.0, cell.1, cell.2)]
    NonFiniteRate { cell: (usize, usize, usize), eta: f64 },

    #[error("invalid value {value} in {what} at position {index}")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("impossible structural zero at cell ({}, {}, {}): offset is 0 but count is {count}", cell.0, cell.1, cell.2)]
    ImpossibleStructuralZero { cell: (usize, usize, usize), count: u64 },

    #[error("rank-deficient design: column {column} is collinear with columns {span:?}")]
    RankDeficient { column: usize, span: Vec<usize> },

    #[error("no cells with positive offset")]
    NoActiveCells,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {needed} draws, found {found}")]
    TooFewDraws { needed: usize, found: usize },

    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },

    #[error("layout {regions}x{groups} does not factor N = {n}")]
    Layout { regions: usize, groups: usize, n: usize },

    #[error("iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::Chain { .. } => e,
            e => Error::Chain {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
