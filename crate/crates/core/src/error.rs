use thiserror::Error;

pub type Result<T> = std::result::Result<T, HdlpError>;

#[derive(Debug, Error)]
pub enum HdlpError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// `line` and `column` are 1-based positions in the source file.
    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("degenerate column `{0}`: zero sample variance")]
    DegenerateColumn(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("nonstationary coefficients: companion spectral radius {radius:.6} >= 1")]
    Nonstationary { radius: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (KKT residual {kkt_residual:.3e})")]
    NoConvergence { sweeps: usize, kkt_residual: f64 },

    #[error("brute-force oracle supports at most {max} coordinates, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("degenerate node-wise regression for column {node}: tau^2 = {tau2:.3e}")]
    DegenerateNode { node: usize, tau2: f64 },

    #[error("{failures} of {total} replications failed (limit 10%)")]
    ScenarioFailed { failures: usize, total: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HdlpError>,
    },
}

impl HdlpError {
    pub fn context(self, context: impl Into<String>) -> Self {
        HdlpError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &HdlpError {
        match self {
            HdlpError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
