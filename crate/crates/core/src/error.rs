use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("unknown situation '{0}'")]
    UnknownSituation(String),

    #[error("unknown factor '{0}'")]
    UnknownFactor(String),

    #[error("state is not part of the structure: {0}")]
    UnknownState(String),

    #[error("model is invalid ({} diagnostics)", .0.len())]
    InvalidModel(Vec<Diagnostic>),

    #[error("unguarded recursion through process '{0}'")]
    UnguardedRecursion(String),

    #[error("parallel composition needs an aspect on at least one side: {0}")]
    UnsupportedParallel(String),

    #[error("aspect '{0}' is used outside of a parallel composition")]
    DetachedAspect(String),

    #[error("no root process declared")]
    NoRoot,

    #[error("too many causal factors in one situation ({0}, at most {max})", max = crate::risk::MAX_FACTORS)]
    TooManyFactors(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty trace")]
    EmptyTrace,
}

pub type Result<T> = std::result::Result<T, Error>;
