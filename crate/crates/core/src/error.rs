use thiserror::Error;

/// Errors surfaced by the solver, optimizer and driver layers.
#[derive(Debug, Error)]
pub enum CookError {
    #[error("solver diverged at step {step}: non-finite {what}")]
    SolverDiverged { step: usize, what: String },

    #[error("non-finite adjoint first appeared backpropagating step {step}")]
    NonFiniteAdjoint { step: usize },

    #[error("pretrain diverged (loss grew 10x over a 50-iteration window)")]
    PretrainDiverged,

    #[error("empty mask: weight sum is zero")]
    EmptyMask,

    #[error("protein vanished: post-advection protein mass below threshold")]
    ProteinVanished,

    #[error("value not strictly interior to its bounds: {0}")]
    NotInterior(String),

    #[error("non-finite gradient: no update applied")]
    NonFiniteGradient,

    #[error("unknown optimization mode `{0}`")]
    UnknownMode(String),

    #[error("config drift: checkpoint hash {found:#018x} != current config hash {expected:#018x}")]
    ConfigDrift { expected: u64, found: u64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty sweep grid")]
    EmptySweepGrid,

    #[error("serialization container error: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CookError>;
