use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A reserve, price factor or inventory left the admissible region.
    #[error("degenerate reserves: {quantity} = {value}{}", step_suffix(*.step))]
    DegenerateReserves {
        quantity: &'static str,
        value: f64,
        step: Option<usize>,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Probability mass was pushed outside the state grid.
    #[error("state grid overflow at step {step}: {mass:e} mass left [{lower}, {upper}]")]
    GridOverflow {
        step: usize,
        mass: f64,
        lower: f64,
        upper: f64,
    },

    #[error("fixed point not reached after {} iterations (last residual {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NotConverged { history: Vec<f64> },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

fn step_suffix(step: Option<usize>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn degenerate(quantity: &'static str, value: f64) -> Self {
        Error::DegenerateReserves {
            quantity,
            value,
            step: None,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attach a time-step index to a degenerate-reserve error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::DegenerateReserves {
                quantity, value, ..
            } => Error::DegenerateReserves {
                quantity,
                value,
                step: Some(step),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {value}")))
    }
}
