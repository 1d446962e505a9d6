//! Reconstruction of a hypersurface from a metric `g` and second form `II` by
//! integrating the Gauss-Weingarten frame equations: Gauss-Codazzi residuals,
//! the frame form, path integration, grid reconstruction, loop holonomy, and
//! rigid alignment.

mod align;
mod export;
mod fields;
mod geometry;
mod integrate;
mod reconstruct;

pub use align::{align_rigid, Alignment};
pub use export::{obj_mesh, positions_csv};
pub use fields::{FieldGrid, TensorFieldPair, FIELD_STEP, SYMMETRY_TOL};
pub use geometry::{
    christoffel, flatness_residual, frame_form, gauss_codazzi_residual, Christoffel, GaussCodazzi, NESTED_FIELD_STEP,
};
pub use integrate::{
    holonomy_loop, initial_frame, integrate_path, integrate_path_with_stats, rectangle_loop, reorthonormalize,
    FrameState, IntegrationStats, DEFAULT_STEPS_PER_UNIT, GRAM_DRIFT_LIMIT, REORTHONORMALIZE_EVERY,
};
pub use reconstruct::{
    align_to_patch, reconstruct_grid, LoopRecord, PathIndependence, ReconstructionConfig, ReconstructionResult,
    Verification, VERIFICATION_TOL,
};
