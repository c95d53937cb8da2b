use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("weight error: {0}")]
    Weight(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("node error: {0}")]
    Node(String),

    #[error("no treatment variation (sum of squared treatment residuals {sum_sq:e})")]
    NoTreatmentVariation { sum_sq: f64 },

    #[error("degenerate Hessian at parent node")]
    DegenerateHessian,

    #[error("weak or degenerate instrument (|sum T~Z~| = {value:e}, scale {scale:e})")]
    WeakInstrument { value: f64, scale: f64 },

    #[error("rank error: {0}")]
    Rank(String),

    #[error("revenue is not concave in price (sum of slopes {sum_beta:e} >= 0)")]
    NonConcave { sum_beta: f64 },

    #[error("learner failed at node {path}: {source}")]
    AtNode {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
