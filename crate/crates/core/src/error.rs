use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate geometry: marker '{marker}' coincides with the radar at sample {sample}")]
    DegenerateGeometry { marker: String, sample: usize },

    #[error("intervention infeasible: marker '{marker}' would reach range {range:.6} m at sample {sample} (alpha = {alpha})")]
    InterventionInfeasible {
        marker: String,
        sample: usize,
        range: f64,
        alpha: f64,
    },

    #[error("degenerate correlation: {0} has zero variance")]
    DegenerateCorrelation(&'static str),

    #[error("degenerate fit: baseline centroid has zero energy")]
    DegenerateFit,

    #[error("undefined DCS: all applied scaling factors are equal")]
    UndefinedDenominator,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("model invocation failed: {msg}")]
    ModelInvocation { msg: String, diagnostics: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
