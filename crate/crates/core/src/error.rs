use alloc::string::String;

/// Errors raised by the tracking core.
///
/// `Input` covers malformed or inconsistent data handed to an operation,
/// `Projection` is raised for pixels that cannot be lifted onto the ground
/// plane, and `Internal` signals a broken invariant inside the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("projection error: {0}")]
    Projection(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(alloc::format!($($arg)*)) };
}
pub(crate) use input_err;
