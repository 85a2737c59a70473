//! Error type shared across the crate.

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error enum. Numerical failures carry enough context (iteration
/// counts, achieved residuals) to diagnose a run from the message alone.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}{}", ctx(context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value encountered{}", ctx(context))]
    NonFinite { context: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgDidNotConverge { iterations: usize, residual: f64 },

    #[error("could not bracket the residual root within {doublings} doublings (last mu {last_mu:.3e})")]
    Unbracketable { doublings: usize, last_mu: f64 },

    #[error("multiplier root find exceeded {max_outer} evaluations (residual gap {gap:.3e})")]
    ProjectionDidNotConverge { max_outer: usize, gap: f64 },

    #[error("zero denominator in {context}")]
    ZeroDenominator { context: &'static str },

    #[error("length {len} is not divisible by 2^{levels} as required by the transform")]
    NonDyadic { len: usize, levels: usize },

    #[error("non-finite loss at iteration {iter}")]
    NonFiniteLoss { iter: usize },

    #[error("training diverged at batch {batch}: loss {loss:.3e} vs initial {initial:.3e}")]
    Diverged { batch: usize, loss: f64, initial: f64 },

    #[error("solver failed at iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn ctx(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" in {context}")
    }
}

impl Error {
    /// Wraps an error with the iterate index of the outer solver loop.
    pub fn at_iteration(self, iter: usize) -> Error {
        Error::AtIteration {
            iter,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
