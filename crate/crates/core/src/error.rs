use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("years must be strictly increasing (year {year} follows {previous})")]
    NonMonotoneYears { previous: f64, year: f64 },
    #[error("year {year}: n_obs = {n_obs} is below the minimum of 150")]
    NObsTooSmall { year: f64, n_obs: u32 },
    #[error("year {year}: column {column} has invalid value {value}")]
    NonPositiveValue {
        year: f64,
        column: &'static str,
        value: f64,
    },
    #[error("firm series needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("window [{start}, {end}] is not covered by the series")]
    WindowNotCovered { start: f64, end: f64 },
    #[error("volatility fit needs at least {needed} knots in the memory window, got {got}")]
    TooFewKnots { needed: usize, got: usize },
    #[error("time step {dt} does not divide one year")]
    DtNotAligned { dt: f64 },
    #[error("implicit step {step} is singular (1 - theta*dt*alpha*V_lag = {denominator:e})")]
    SingularImplicitStep { step: usize, denominator: f64 },
    #[error("non-finite firm value at step {step}")]
    NonFiniteValue { step: usize },
    #[error("all {n} paths were excluded (non-positive or non-finite)")]
    AllPathsExcluded { n: usize },
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error("non-finite operator coefficient in row {row}")]
    NonFiniteCoefficient { row: usize },
    #[error("Krylov phi evaluation did not converge after {halvings} step halvings")]
    BreakdownNotConverged { halvings: u32 },
    #[error("lag time {lag} lies before the memory window start {start}")]
    LagOutOfMemory { lag: f64, start: f64 },
    #[error("surfaces are defined on different lattices")]
    LatticeMismatch,
    #[error("solver failed at tau index {index}: {source}")]
    AtTauIndex { index: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_tau(self, index: usize) -> Self {
        Error::AtTauIndex {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, with positional wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTauIndex { source, .. } => source.root(),
            other => other,
        }
    }
}
