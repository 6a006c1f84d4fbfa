use thiserror::Error;

/// Errors raised across the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("truncated capture: frame {frame} needs sample {needed} but capture has {available}")]
    TruncatedCapture {
        frame: usize,
        needed: usize,
        available: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("combinatorial budget exceeded: {needed} evaluations > budget {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("neighbour graph is disconnected, component sizes {0:?}")]
    DisconnectedGraph(Vec<usize>),

    #[error("no writing detected")]
    NoWritingDetected,

    #[error("every segment was classified as a pen lift")]
    EmptyInk,

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{stage} failed{}: {source}", frame.map(|f| format!(" at frame {f}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        frame: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfiguration(msg.into())
    }

    /// Tags an error with the pipeline stage (and frame) it came from.
    pub fn at_stage(self, stage: &'static str, frame: Option<usize>) -> Self {
        Error::Stage {
            stage,
            frame,
            source: Box::new(self),
        }
    }
}
