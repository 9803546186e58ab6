use thiserror::Error;

/// Errors raised by the solvers, the digital twins and the simulation loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("infeasible set: lower bounds sum to {lower_sum} but capacity is {capacity}")]
    Infeasible { lower_sum: f64, capacity: f64 },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tick {tick}: {source}")]
    AtTick {
        tick: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_tick(self, tick: usize) -> Self {
        Error::AtTick {
            tick,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
