//! Lie algebroid of Killing fields tangent to a hypersurface, its logarithmic
//! derivative and induced fundamental forms, and reconstruction of
//! hypersurfaces from metric and second-form data by frame integration.

pub mod algebroid;
pub mod bonnet;
pub mod error;
pub mod fundamental_forms;
pub mod hypersurface;
pub mod jet;
pub mod killing;
pub mod linalg;
pub mod log_derivative;
pub mod report;
pub mod sampling;

pub use error::{GeometryError, Result};
