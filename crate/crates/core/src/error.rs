use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not skew-symmetric (max |S + Sᵀ| = {defect:e})")]
    NotSkew { defect: f64 },

    #[error("not a proper rotation (orthogonality defect {orthogonality:e}, det {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("subspace has no common zero (residual {residual:e})")]
    NoCommonZero { residual: f64 },

    #[error("stacked zero system is rank deficient (rank {rank}, need {needed})")]
    DegenerateSystem { rank: usize, needed: usize },

    #[error("immersion is rank deficient at {point:?} (σ_min/σ_max = {ratio:e})")]
    RankDeficient { point: Vec<f64>, ratio: f64 },

    #[error("Killing field value is not tangent (least-squares residual {residual:e})")]
    NotTangent { residual: f64 },

    #[error("stencil at {point:?} leaves the chart interior (margin {margin:e})")]
    StencilOutOfDomain { point: Vec<f64>, margin: f64 },

    #[error("inclusion depends on the anchor preimage (discrepancy {discrepancy:e})")]
    ChoiceDependent { discrepancy: f64 },

    #[error("metric is not positive definite at {point:?}")]
    SingularMetric { point: Vec<f64> },

    #[error("unknown preset '{name}' (valid: plane, sphere, cylinder, graph, torus)")]
    UnknownPreset { name: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path point {point:?} lies outside the chart")]
    PathExitsChart { point: Vec<f64> },

    #[error("frame Gram drift {drift:e} exceeds {limit:e} before re-orthonormalization")]
    GramDrift { drift: f64, limit: f64 },

    #[error("point cloud is degenerate (covariance rank {rank})")]
    DegenerateCloud { rank: usize },

    #[error("tensor field data: {0}")]
    FieldData(String),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
