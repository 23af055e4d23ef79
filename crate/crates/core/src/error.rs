use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Theorem-level checks need `d >= 3`; `d = 2` is a valid topology but
    /// outside the guarantee.
    #[error("branching factor d = {0} is below the theorem hypothesis d >= 3")]
    BranchingBelowTheorem(u32),

    #[error("invalid level: {0}")]
    InvalidLevel(String),

    #[error("malformed chain: {0}")]
    MalformedChain(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("no node attempts to authorize")]
    NoAttempters,

    #[error("table is not almost-uniform")]
    NotAlmostUniform,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("domination check failed at phi = {phi}: {detail}")]
    DominationCheckFailed { phi: u32, detail: String },

    #[error("instance too large: {0}")]
    SizeLimit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Custody(#[from] crate::custody::CustodyError),
}
