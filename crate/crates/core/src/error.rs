use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("site {site} is out of range for a ring of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("configurations have different sizes ({left} vs {right})")]
    SizeMismatch { left: usize, right: usize },

    #[error("a jump needs two distinct sites, got {0} twice")]
    SameSite(usize),

    #[error("ring of {len} sites is too small for this rate window (need at least {min})")]
    RingTooSmall { len: usize, min: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter `{name}` must be nonnegative, got {value}")]
    NegativeParameter { name: String, value: String },

    #[error("could not parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("blocking configurations detected: {0}")]
    Blocking(String),
}

pub type Result<T> = std::result::Result<T, Error>;
