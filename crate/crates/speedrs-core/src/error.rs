use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("path must have at least 2 points and strictly increasing times")]
    InvalidPath,
    #[error("subsampled path would have fewer than 2 points")]
    TooFewPoints,
    #[error("window end {0} falls before the second time stamp")]
    WindowTooShort(f64),
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("coordinate {0} starts at zero; cannot normalize")]
    ZeroInitialValue(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("shape mismatch between bundles")]
    ShapeMismatch,
    #[error("length mismatch: pointwise features require a uniform path length")]
    LengthMismatch,
    #[error("bundle contains no paths")]
    EmptyBundle,
    #[error("PDE solution exceeded 1e300; inputs are pathological")]
    NumericalOverflow,
    #[error("need at least 2 samples per side, got n={0}, m={1}")]
    TooFewSamples(usize, usize),
    #[error("ridge-shifted Gram is not positive definite; increase lambda")]
    SingularSystem,
    #[error("bundles must share a window grid")]
    WindowGridMismatch,
    #[error("antithetic rBergomi sampling needs an even path count, got {0}")]
    OddPathCount(usize),
    #[error("could not place {0} non-overlapping particles after bounded retries")]
    PackingTooDense(usize),
    #[error("training loss became non-finite at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("reference count {0} not divisible by dimension {1}")]
    IndivisibleCount(usize, usize),
    #[error("feature length {got} does not match truncation level (expected {expected})")]
    FeatureLength { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
