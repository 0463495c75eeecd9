use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants fall into two families: validation failures (bad inputs or
/// configuration, detected before any numerics run) and numerical aborts
/// (a computation started but could not complete). [`Error::is_validation`]
/// tells them apart; the command-line runner maps them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("missing parameter `{param}` for preset `{preset}`")]
    MissingParameter { preset: String, param: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coefficient `a` must be positive, found {value} at x = {x}")]
    NonPositiveDiffusion { x: f64, value: f64 },

    #[error("stencil self-overlap: {0}")]
    StencilOverlap(String),

    #[error("dense conversion refused: {qubits} qubits exceeds the guard of {limit}")]
    DenseGuard { qubits: usize, limit: usize },

    #[error("qubit count {0} out of range")]
    QubitRange(usize),

    #[error("matrix of size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("band at offset {offset:?} is not representable at Taylor order {order} (residual {residual:e})")]
    BandNotRepresentable {
        offset: Vec<i8>,
        order: usize,
        residual: f64,
    },

    #[error("operator is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("shot count must be at least 1")]
    ZeroShots,

    #[error("parameter index {index} out of range (ansatz has {count} parameters)")]
    ParameterIndex { index: usize, count: usize },

    #[error("target vector has zero norm")]
    ZeroTarget,

    #[error("unstable time step: dt * max|diag| = {0}")]
    Unstable(f64),

    #[error("degenerate McLachlan system: every singular value is below the cutoff (sigma_max = {0:e})")]
    DegenerateSystem(f64),

    #[error("observable is not normalized (norm {0})")]
    Unnormalized(f64),

    #[error("l1 enforcement skipped: state mass is zero")]
    ZeroMass,

    #[error("interval endpoint {a} out of range for {n} qubits")]
    IntervalRange { a: usize, n: usize },

    #[error("piecewise Taylor readout supports D <= 2, got D = {0}")]
    DimensionCost(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// True for failures detected before any numerical work starts.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Unstable(_)
                | Error::DegenerateSystem(_)
                | Error::NonFinite(_)
            | Error::Optimizer(_)
                | Error::ZeroMass
                | Error::BandNotRepresentable { .. }
                | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}
