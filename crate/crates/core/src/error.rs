use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ragged trajectories: trajectory {traj_id} has {len} steps, expected {expected}")]
    RaggedTrajectory {
        traj_id: String,
        len: usize,
        expected: usize,
    },
    #[error("reward {reward} at trajectory {traj_id}, t={t} exceeds declared bound r_max={r_max}")]
    RewardBound {
        traj_id: String,
        t: usize,
        reward: f64,
        r_max: f64,
    },
    #[error("action {action} outside 0..{action_count}")]
    ActionRange { action: usize, action_count: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigenvalue {index} is {value:e}, below the PSD tolerance")]
    NotPositiveSemidefinite { index: usize, value: f64 },
    #[error("eigenvalue {kappa} is {value:e}, at or below the rank tolerance; lower kappa")]
    RankDeficient { kappa: usize, value: f64 },
    #[error("kappa {kappa} outside 1..={m}")]
    KappaRange { kappa: usize, m: usize },
    #[error("degenerate spectrum: all eigenvalues are non-positive")]
    DegenerateSpectrum,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Divergence { epoch: usize },
    #[error("action {0} never appears in the dataset")]
    Coverage(usize),
    #[error("paired comparison needs identical seed lists: {0}")]
    Pairing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Dimension(_) => "dimension",
            Error::RaggedTrajectory { .. } => "ragged_trajectory",
            Error::RewardBound { .. } => "reward_bound",
            Error::ActionRange { .. } => "action_range",
            Error::InsufficientData(_) => "insufficient_data",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotPositiveSemidefinite { .. } => "not_psd",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::KappaRange { .. } => "kappa_range",
            Error::DegenerateSpectrum => "degenerate_spectrum",
            Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::Coverage(_) => "coverage",
            Error::Pairing(_) => "pairing",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
