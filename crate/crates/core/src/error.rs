use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("dilation factor must be positive, got {0}")]
    NonPositiveDilation(f64),

    #[error("segment parameter {0} outside [-1/2, 1/2]")]
    SegmentParameter(f64),

    #[error("{name} = {value} outside its admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("direction angle {0} has sin(phi) = 0; rotate the tube into (0, pi) first")]
    DegenerateDirection(f64),

    #[error("tube direction makes an angle larger than pi/4 with the x2-axis (phi = {0})")]
    AngleHypothesis(f64),

    #[error("inclusion precondition violated: |e - e'| = {chord} > c1 delta^2 = {bound}")]
    InclusionPrecondition { chord: f64, bound: f64 },

    #[error("grid spacing {spacing} too coarse for delta = {delta}; need at most {max}")]
    GridTooCoarse { spacing: f64, delta: f64, max: f64 },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(&'static str),

    #[error("function support is unbounded or not declared")]
    UnboundedSupport,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("estimated {estimated} grid cells exceed the memory budget of {budget}")]
    CapacityExceeded { estimated: u64, budget: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
