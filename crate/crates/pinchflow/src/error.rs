//! Crate-wide error type.

/// Everything that can go wrong across the library.
///
/// Mathematical outcomes that callers are expected to branch on
/// (`NotAchievable`, `ConvexityLost`) are errors here rather than enum
/// results so that pipelines fail loudly when a precondition breaks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A curvature vector lies outside the cone required by the operation.
    #[error("curvature vector outside required cone: {0}")]
    ConeViolation(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("argument outside domain: {0}")]
    Domain(String),

    /// The speed function is neither convex nor concave, so sign checks
    /// that depend on a classification cannot run.
    #[error("speed function unclassified: {0}")]
    Unclassified(String),

    /// A principal radius of curvature crossed zero during a flow.
    #[error("convexity lost at grid index {index}: radius {radius:.6e}")]
    ConvexityLost { index: usize, radius: f64 },

    /// An explicit time step exceeded the stability bound.
    #[error("time step {dt:.6e} exceeds stability bound {bound:.6e}")]
    StepTooLarge { dt: f64, bound: f64 },

    /// The adaptive ODE integrator drove its step size below resolution.
    #[error("step size underflow near psi = {psi:.6e}")]
    StiffFailure { psi: f64 },

    /// No pinching threshold exists: Q is still nonnegative at eps = 1.
    #[error("pinching threshold not achievable: Q(1) = {q1:.6e} >= 0")]
    NotAchievable { q1: f64 },

    /// A configuration key is missing, unknown, or has an invalid value.
    #[error("invalid config: {key}: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
