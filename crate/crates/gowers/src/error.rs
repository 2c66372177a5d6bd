use thiserror::Error;

/// Errors raised across the crate.
///
/// The CLI maps these onto its exit codes: input problems exit with 2,
/// budget overruns with 3 and failed verifications with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("group mismatch: {0}")]
    GroupMismatch(String),
    #[error("budget exceeded: needed {needed} but the cap is {cap} ({what})")]
    Budget { what: String, needed: u128, cap: u128 },
    #[error("numerical check failed: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("search failed: {0}")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::GroupMismatch(msg.into())
    }

    /// Exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } => 3,
            Error::Verification(_) | Error::Numerical(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tuple-count cap for exhaustive averages and searches.
///
/// The default reads `GOWERS_BUDGET` from the environment and falls back to `10^8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Budget(pub u128);

pub const DEFAULT_BUDGET: u128 = 100_000_000;
pub const BUDGET_ENV: &str = "GOWERS_BUDGET";

impl Default for Budget {
    fn default() -> Self {
        let cap = std::env::var(BUDGET_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<u128>().ok())
            .unwrap_or(DEFAULT_BUDGET);
        Budget(cap)
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget(u128::MAX)
    }

    pub fn check(&self, what: &str, needed: u128) -> Result<()> {
        if needed > self.0 {
            Err(Error::Budget { what: what.to_string(), needed, cap: self.0 })
        } else {
            Ok(())
        }
    }
}
