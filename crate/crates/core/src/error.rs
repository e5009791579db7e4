use thiserror::Error;

/// Errors produced by the kinematics, map, seed-generation and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model parse error: {0}")]
    ModelParse(String),

    #[error("model validation error: {0}")]
    ModelInvalid(String),

    #[error("unknown frame `{0}`")]
    UnknownFrame(String),

    #[error("unknown joint `{0}`")]
    UnknownJoint(String),

    #[error("unknown arm `{0}`")]
    UnknownArm(String),

    #[error("joint state length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("active joint set is empty")]
    EmptyActiveSet,

    #[error("jacobian must have 6 rows, got {0}")]
    BadJacobianShape(usize),

    #[error("map grid config error: {0}")]
    GridConfig(String),

    #[error("map file error: {0}")]
    MapFormat(String),

    #[error("map was built for a different chain/arm (hash mismatch)")]
    MapChainMismatch,

    #[error("scenario error: {0}")]
    ScenarioInvalid(String),

    #[error("scenario infeasible: no gene with finite fitness after {0} initialization rounds")]
    Infeasible(usize),

    #[error("ik request error: {0}")]
    IkInvalid(String),

    #[error("evaluation config error: {0}")]
    EvalConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
