//! Error classes and their exit codes.

use std::fmt::Display;

/// A bad request (exit 2) or a failure while doing the work (exit 1).
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn invalid(msg: impl Display) -> Self {
        Failure::Invalid(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => e,
        }
    }
}

/// Attaches context and an error class to a result.
pub trait Invalid<T> {
    fn invalid(self, context: impl Display) -> Result<T, Failure>;
    fn runtime(self, context: impl Display) -> Result<T, Failure>;
}

impl<T, E> Invalid<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn invalid(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(anyhow::Error::new(e).context(context.to_string())))
    }

    fn runtime(self, context: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(anyhow::Error::new(e).context(context.to_string())))
    }
}
