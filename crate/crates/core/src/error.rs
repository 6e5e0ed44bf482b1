use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud contains a non-finite coordinate")]
    NonFinitePoint,
    #[error("joint spec does not match any of the 19 proposals of the box")]
    UnknownProposal,
    #[error("unknown part id {0}")]
    UnknownPart(usize),
    #[error("action point is {distance:.3e} m away from part {part}")]
    PointNotOnPart { part: usize, distance: f64 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid joint state: {0}")]
    InvalidJoint(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid prior weights: {0}")]
    InvalidPrior(String),
    #[error("all importance weights are zero")]
    DegenerateWeights,
    #[error("particle pool is empty")]
    EmptyPool,
    #[error("degenerate range: theta_max ({max}) must exceed theta_init ({init})")]
    DegenerateRange { init: f64, max: f64 },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("probe set is empty")]
    EmptyProbeSet,
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
