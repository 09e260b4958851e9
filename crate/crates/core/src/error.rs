use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group spec mismatch: {left} vs {right}")]
    SpecMismatch { left: String, right: String },

    #[error("matrix is not in the Lie algebra (projection residual {residual:.3e})")]
    NotInAlgebra { residual: f64 },

    #[error("matrix is not a group element (constraint residual {residual:.3e})")]
    NotInGroup { residual: f64 },

    #[error("logarithm requested at rotation angle {angle:.9} rad, at or beyond the cut locus")]
    CutLocus { angle: f64 },

    #[error("projection onto the group failed: {0}")]
    ProjectionFailed(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("system `{0}` declares no input action")]
    MissingInputAction(String),

    #[error("no analytic derivative available for {0}")]
    MissingAnalyticDerivative(String),

    #[error("system is not invariant; uncovered input direction {witness}")]
    NotInvariant { witness: DVector<f64> },

    #[error("system is not group affine (max residual {residual:.3e})")]
    NotGroupAffine { residual: f64 },

    #[error("rank unstable under sampling: {half} at half the samples, {full} at all samples")]
    RankInstability { half: usize, full: usize },

    #[error("extension verification failed: {0}")]
    VerificationFailed(String),

    #[error("numeric blow-up: {0}")]
    NumericBlowup(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("unknown measurement model `{0}`")]
    UnknownModel(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
