use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("domain mismatch: operands live on different lattices")]
    DomainMismatch,

    #[error("box is not lattice aligned: {0}")]
    NotAligned(String),

    #[error("box is outside the domain or empty: {0}")]
    OutOfDomain(String),

    #[error("symbol evaluates to a non-finite value at cell {cell}")]
    NonFiniteSymbol { cell: usize },

    #[error("weight must be strictly positive and finite (cell {cell} has {value})")]
    NonPositiveWeight { cell: usize, value: f64 },

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("zero mass on region")]
    ZeroMass,

    #[error("empty region")]
    EmptyRegion,

    #[error("operation requires the canonical dyadic grid, got grid {0}")]
    ShiftedGrid(usize),

    #[error("no adjacent dyadic cube encloses the box within the 3x size bound: {0}")]
    NoEnclosure(String),

    #[error("bloom sandwich violated on cube {cube}: ratio {ratio} outside [1, {bound}]")]
    SandwichViolation { cube: String, ratio: f64, bound: f64 },

    #[error("weight characteristic is not finite on the cube family")]
    NotMuckenhoupt,

    #[error("kernel variant {variant} is not available in dimension {dim}")]
    KernelDimension { variant: String, dim: usize },

    #[error("kernel size bound violated at x={x:?}, y={y:?}: |K|·|x-y|^d = {scaled} > C = {bound}")]
    KernelSizeBound {
        x: [f64; 2],
        y: [f64; 2],
        scaled: f64,
        bound: f64,
    },

    #[error("kernel is degenerate at y={y:?}, r={r}: best constant {best} < {required}")]
    Degenerate {
        y: [f64; 2],
        r: f64,
        best: f64,
        required: f64,
    },

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("probe refused: {0}")]
    ProbeRefused(String),

    #[error("kind/parameter mismatch: {0}")]
    KindMismatch(String),

    #[error("io: {0}")]
    Io(String),

    #[error("corrupt cache: {0}")]
    CorruptCache(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
