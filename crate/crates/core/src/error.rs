use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model descriptor: {0}")]
    InvalidModel(String),

    #[error("invalid reward: {0}")]
    InvalidReward(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("simulation blow-up: non-finite state after index {last_finite}")]
    BlowUp { last_finite: usize },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("runaway exploration: segment started at t={t_start} still running after {elapsed} time units")]
    RunawayExploration { t_start: f64, elapsed: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(_) | Error::Io(_) => 1,
            Error::InvalidModel(_)
            | Error::InvalidReward(_)
            | Error::InvalidKernel(_)
            | Error::Domain(_) => 2,
            _ => 3,
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidReward(_) => "invalid_reward",
            Error::InvalidKernel(_) => "invalid_kernel",
            Error::Domain(_) => "domain",
            Error::BlowUp { .. } => "blow_up",
            Error::Quadrature(_) => "quadrature",
            Error::Oracle(_) => "oracle",
            Error::RunawayExploration { .. } => "runaway_exploration",
            Error::Fit(_) => "fit",
            Error::Experiment(_) => "experiment",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
