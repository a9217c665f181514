use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid certificate (a = {a}, delta = {delta})")]
    InvalidCertificate { a: f64, delta: f64 },

    #[error("degenerate coefficient: {0}")]
    DegenerateCoefficient(String),

    #[error("lambda outside Hölder window: {0}")]
    OutsideWindow(String),

    /// A named inequality of the doubling cascade failed.
    #[error("cascade check `{check}` failed: {detail}")]
    CascadeCheck { check: &'static str, detail: String },

    #[error("sweep range requires 0 < c < upper side, got c = {c}, upper = {upper}")]
    SweepRange { c: f64, upper: f64 },

    /// A hypothesis of the volume-doubling chain failed.
    #[error("chain hypothesis `{hypothesis}` failed: {detail}")]
    ChainHypothesis {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("no certified C below cap 2^{cap_log2}")]
    SearchCap { cap_log2: u32 },

    /// The final-constant search ran out of f64 range for the given moderate constant.
    #[error(
        "final constant exceeds 2^{cap_log2} (moderate constant C2 = {moderate:e}, dim = {dim})"
    )]
    ConstantOutOfRange {
        moderate: f64,
        dim: usize,
        cap_log2: u32,
    },

    #[error("oracle requires gaussian cells")]
    OracleRequiresGaussian,

    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("curve not anchored at origin: upper bound {0} at lambda = 0")]
    CurveNotAnchored(f64),

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
