//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid spectral grid construction (non-increasing centers, bad FWHM, ...).
    #[error("invalid grid: {0}")]
    Grid(String),

    /// Non-finite or otherwise unusable numeric input.
    #[error("invalid data: {0}")]
    Data(String),

    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-supplied parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A target band center lies outside the wavelength range of the source grid.
    #[error("target band {target} nm outside source coverage [{min} nm, {max} nm]")]
    Coverage { target: f64, min: f64, max: f64 },

    /// A removal wavelength matched zero or several grid centers.
    #[error("removal band {center} nm matched {matches} grid centers within {tolerance} nm")]
    AmbiguousBand {
        center: f64,
        matches: usize,
        tolerance: f64,
    },

    /// Spectrum mean too small to normalize; signals a dark or invalid pixel.
    #[error("degenerate spectrum: mean {mean:e} not above {eps:e}")]
    DegenerateSpectrum { mean: f64, eps: f64 },

    /// Regression/projection target carries no variance.
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    /// Requested component count exceeds the data rank.
    #[error("rank deficiency: {0}")]
    Rank(String),

    /// A matrix factorization failed beyond the jitter recovery policy.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Pearson correlation is undefined (a constant input vector).
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    /// Too few samples for the requested protocol step.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Every grid point of a hyperparameter search failed.
    #[error("grid search failed: {0}")]
    SearchFailure(String),

    /// Malformed serialized model or CSV content.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// An error with evaluation context (repetition, round, stage) attached.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with a human-readable context string.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
