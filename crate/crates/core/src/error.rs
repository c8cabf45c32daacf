use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeoscaleError>;

#[derive(Debug, Error)]
pub enum GeoscaleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("parse error: {0}")]
    Format(String),

    #[error("metric at point {point} is not invertible: {reason}")]
    NonInvertibleMetric { point: usize, reason: String },

    #[error("distortion undefined at epsilon {epsilon}: all {evaluated} evaluation points failed")]
    DistortionUndefined { epsilon: f64, evaluated: usize },

    #[error("bandwidth selection failed: {0}")]
    Selection(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GeoscaleError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GeoscaleError::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input or configuration rather than by
    /// the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            GeoscaleError::InvalidArgument(_)
                | GeoscaleError::Parse { .. }
                | GeoscaleError::Format(_)
                | GeoscaleError::Io(_)
        )
    }
}
