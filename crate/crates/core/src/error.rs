use thiserror::Error;

pub type Result<T> = std::result::Result<T, CsfftError>;

#[derive(Debug, Error)]
pub enum CsfftError {
    /// Invalid or inconsistent parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// The sampling duration cannot fit the round schedule.
    #[error("duration {given} s is infeasible; at least {required} s is required")]
    InfeasibleDuration { required: f64, given: f64 },

    /// A sample was requested outside `[0, T]`.
    #[error("sample time {t} outside [0, {duration}]")]
    Domain { t: f64, duration: f64 },

    /// A `HashToBins` call would run past the end of the duration.
    #[error("sampling budget exceeded: window [{start}, {end}] s does not fit in [0, {duration}] s")]
    Budget { start: f64, end: f64, duration: f64 },

    /// Least squares with (numerically) repeated frequencies.
    #[error("rank-deficient system: frequencies {0} and {1} are too close")]
    RankDeficient(f64, f64),

    /// An internal invariant did not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CsfftError {
    pub fn config(msg: impl Into<String>) -> Self {
        CsfftError::Config(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            CsfftError::Config(_)
            | CsfftError::Io(_)
            | CsfftError::Json(_)
            | CsfftError::Csv(_)
            | CsfftError::RankDeficient(..) => 2,
            CsfftError::InfeasibleDuration { .. } => 3,
            CsfftError::Domain { .. } | CsfftError::Budget { .. } | CsfftError::Invariant(_) => 4,
        }
    }
}
