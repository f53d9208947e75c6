use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("class {0} has no records")]
    EmptyClass(u8),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("QP did not converge after {iterations} iterations (stationarity residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("no base kernel aligns positively with the labels")]
    NoAlignedKernel,

    #[error("centered alignment undefined: {0}")]
    UndefinedAlignment(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Length(_) => "length",
            Error::Consistency(_) => "consistency",
            Error::Value(_) => "value",
            Error::Size(_) => "size",
            Error::EmptyClass(_) => "empty_class",
            Error::Precondition(_) => "precondition",
            Error::Numerical(_) => "numerical",
            Error::Degenerate(_) => "degenerate",
            Error::Divergence { .. } => "divergence",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NoAlignedKernel => "no_aligned_kernel",
            Error::UndefinedAlignment(_) => "undefined_alignment",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
