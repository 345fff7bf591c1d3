use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Yule-Walker matrix of the given order is singular for practical purposes.
    #[error("Yule-Walker system of order {order} is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { order: usize, condition: f64 },

    /// The AR polynomial has a root on or outside the stability margin.
    #[error("AR({order}) model is unstable (max root modulus {max_modulus:.9})")]
    Unstable { order: usize, max_modulus: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A Kalman/RTS intermediate stopped being finite.
    #[error("non-finite value in {stage} pass at port {port}")]
    NonFinite { stage: &'static str, port: usize },

    #[error("order selection failed: {0}")]
    Selection(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
