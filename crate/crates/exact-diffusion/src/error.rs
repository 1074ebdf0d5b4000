use thiserror::Error;

/// Errors surfaced by the samplers and series machinery.
///
/// The exactness contract means we never round our way past trouble: when a
/// retrospective bracket cannot be resolved at machine precision, or a
/// user-supplied bound is observed to be violated, the whole run aborts with
/// one of these rather than returning a biased sample.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A retrospective bracket narrowed below machine resolution without
    /// resolving (the uniform draw fell on the series limit).
    #[error("numerical precision exhausted: {0}")]
    NumericalPrecision(String),

    /// A sequence claiming the alternating-bound contract produced
    /// non-monotone envelopes, or failed to converge within the iteration cap.
    #[error("alternating-series contract violated: {0}")]
    SeriesContract(String),

    /// A user-supplied envelope or intensity bound was observed to fail.
    #[error("bound violated: {0}")]
    BoundViolation(String),

    /// The optional rejection-attempt cap was exceeded. This is a diagnostic
    /// guard: a triggered cap aborts the experiment, it never truncates one.
    #[error("attempt cap exceeded: {0}")]
    AttemptCap(String),

    /// Numerical routine (quadrature, root finding) failed to converge.
    #[error("numerical routine failed: {0}")]
    Numerical(String),

    /// Internal invariant broke; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    /// Problem with a model preset or configuration file.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
