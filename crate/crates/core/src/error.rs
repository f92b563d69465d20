use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not supported; the construction needs n >= 6")]
    UnsupportedDimension(u32),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("schedule index {k} lies below the first index k0 = {k0}")]
    IndexBelowStart { k: u32, k0: u32 },

    #[error("bump supports of indices {a} and {b} overlap")]
    OverlappingSupports { a: u32, b: u32 },

    #[error("coefficient {which} is not positive ({value:e}) at chart radius {radius:e}")]
    NonPositiveCoefficient { which: &'static str, value: f64, radius: f64 },

    #[error("quadrature missed its tolerance: value {value:e}, error estimate {error:e}, {intervals} subintervals")]
    Quadrature { value: f64, error: f64, intervals: usize },

    #[error("truncation is active: u0 + W reaches {value:e}, below the truncation level {level:e}")]
    TruncationActive { value: f64, level: f64 },

    #[error("no sign change of {what} on [{lo:e}, {hi:e}]")]
    NoBracket { what: &'static str, lo: f64, hi: f64 },

    #[error("kernel index {index} outside 0..={n}")]
    KernelIndex { index: usize, n: usize },

    #[error("grid too coarse near the pole: {nodes} nodes below theta = {delta:e}, need at least 12")]
    GridTooCoarse { nodes: usize, delta: f64 },

    #[error("fields are sampled on incompatible grids")]
    IncompatibleGrids,

    #[error("Newton iteration failed after {iterations} steps, scaled residual {residual:e}")]
    NewtonFailed { iterations: usize, residual: f64, last: Box<Vec<f64>> },

    #[error("singular bordered system (pivot ratio {condition:e})")]
    SingularBordered { condition: f64 },

    #[error("fitted C0 is not positive ({0:e})")]
    NonPositiveC0(f64),

    #[error("p must point along the first axis for the axisymmetric reduction")]
    OffAxisOffset,
}
