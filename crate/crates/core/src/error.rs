use thiserror::Error;

pub type Result<T> = std::result::Result<T, SusdError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SusdError {
    /// A parameter fell outside its admissible range.
    #[error("{name} = {value} is outside the admissible range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// A caller violated an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    /// Every outcome of a measurement had vanishing probability.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Kraus set cannot be embedded in a two-branch dilation.
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate setup: detected throughput {throughput:e} is below 1e-9")]
    DegenerateSetup { throughput: f64 },

    #[error("run {run} recorded no counts")]
    EmptyRun { run: usize },

    #[error("at least 2 runs are required to estimate probabilities, got {0}")]
    InsufficientRuns(usize),

    #[error("unknown port label: {0}")]
    UnknownPort(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SusdError {
    fn from(e: std::io::Error) -> Self {
        SusdError::Io(e.to_string())
    }
}

/// Validates an inner product `s` against `[0, 1]`.
pub(crate) fn check_overlap(s: f64) -> Result<f64> {
    if s.is_finite() && (0.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(SusdError::Domain {
            name: "s",
            value: s,
            range: "[0, 1]",
        })
    }
}
