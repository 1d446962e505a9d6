//! The Lie algebroid `A ⊂ g × Σ` of Killing fields tangent to a hypersurface
//! patch: fibres, anchor, isotropy kernel, the bracket on sections, the
//! action-algebroid bracket, and the residual suite for their identities.
//!
//! Fibres are described in canonical coefficients of the Killing algebra `g`.
//! `A|_x` is the kernel of the single functional `X ↦ ⟨X(x), ν(x)⟩`, so it has
//! codimension one in `g`.

mod action;
mod maps;
mod residuals;
mod section;

pub use action::{action_algebroid_bracket, action_anchor_morphism_residual, action_jacobi_residual, KillingAction, LieAlgebraAction};
pub use maps::{AlgebraMap, PolynomialMap, Quadratic, ScalarMap, ScaledMap};
pub use residuals::{identity_residuals, sample_all, sample_residuals, ResidualConfig, SampleResiduals, RESIDUAL_NAMES};
pub(crate) use section::check_margin;
pub use section::{
    anchored_bracket, random_section, section_bracket, BracketValue, NormalShift, Section,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::hypersurface::HypersurfacePatch;
use crate::killing::{self, algebra_dim};
use crate::linalg;

/// Single-level finite-difference step for covariant derivatives of sections.
pub const BRACKET_STEP: f64 = 1e-5;
/// Outer step when a bracket is differentiated again (Jacobi).
pub const NESTED_STEP: f64 = 1e-4;
/// Stencil-using operations need this many steps of clearance from the chart
/// boundary.
pub const MARGIN_STEPS: f64 = 3.0;
/// Relative threshold for fibre and kernel ranks.
pub const FIBRE_RANK_RTOL: f64 = 1e-8;
const ANCHOR_RESIDUAL_TOL: f64 = 1e-9;

/// How derivatives of sections along the chart are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DerivativeMode {
    /// Exact Taylor jets of the immersion and of the raw maps.
    Analytic,
    /// Central differences with the given step.
    FiniteDifference { step: f64 },
}

impl DerivativeMode {
    pub fn finite_difference() -> Self {
        DerivativeMode::FiniteDifference { step: BRACKET_STEP }
    }

    pub fn nested_finite_difference() -> Self {
        DerivativeMode::FiniteDifference { step: NESTED_STEP }
    }

    /// Mode for both levels of a nested derivative: the step is raised to at
    /// least [`NESTED_STEP`], since the outer difference amplifies round-off
    /// in the inner one.
    pub fn nested(self) -> Self {
        match self {
            DerivativeMode::Analytic => DerivativeMode::Analytic,
            DerivativeMode::FiniteDifference { step } => DerivativeMode::FiniteDifference {
                step: step.max(NESTED_STEP),
            },
        }
    }

    pub fn is_analytic(self) -> bool {
        matches!(self, DerivativeMode::Analytic)
    }
}

/// Fibre `A|_x` at a chart point.
#[derive(Debug, Clone)]
pub struct AlgebroidFibre {
    u: Vec<f64>,
    point: DVector<f64>,
    normal: DVector<f64>,
    /// `dim g × rank`, orthonormal columns.
    basis: DMatrix<f64>,
    /// `n × rank`: chart coordinates of `#` applied to each basis column.
    anchor_matrix: DMatrix<f64>,
    /// `dim g × (rank − n)`: canonical coefficients spanning `h|_x`.
    kernel_basis: DMatrix<f64>,
    jacobian: DMatrix<f64>,
}

impl AlgebroidFibre {
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn anchor_matrix(&self) -> &DMatrix<f64> {
        &self.anchor_matrix
    }

    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        &self.kernel_basis
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// Number of stored basis vectors.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.u.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.point.len()
    }

    /// Numerically determined rank of the stored basis.
    pub fn numerical_rank(&self) -> usize {
        linalg::numerical_rank(&self.basis, FIBRE_RANK_RTOL)
    }

    /// Element of `A|_x` with the given coordinates in the fibre basis.
    pub fn element(&self, coords: &DVector<f64>) -> DVector<f64> {
        &self.basis * coords
    }

    /// Orthogonal projection of a canonical coefficient vector onto `A|_x`.
    pub fn project(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * c)
    }

    /// Copy with `h|_x` replaced by the given coefficient columns.
    pub fn with_kernel_basis(&self, kernel_basis: DMatrix<f64>) -> AlgebroidFibre {
        AlgebroidFibre {
            kernel_basis,
            ..self.clone()
        }
    }

    /// Copy with basis column `index` removed (a deliberately broken fibre).
    pub fn truncated(&self, index: usize) -> AlgebroidFibre {
        let basis = self.basis.clone().remove_column(index);
        let anchor_matrix = self.anchor_matrix.clone().remove_column(index);
        let kernel_coords = linalg::null_space(&anchor_matrix, FIBRE_RANK_RTOL);
        AlgebroidFibre {
            kernel_basis: &basis * kernel_coords,
            basis,
            anchor_matrix,
            ..self.clone()
        }
    }
}

/// Construct `A|_x`, its anchor, and `h|_x` at the chart point `u`.
pub fn fibre(patch: &HypersurfacePatch, u: &[f64]) -> Result<AlgebroidFibre> {
    let jacobian = patch.jacobian(u)?;
    let normal = patch.gauss_map(u)?;
    let point = patch.position(u)?;
    let d = point.len();
    let dim = algebra_dim(d);
    let functional = killing::tangency_functional(point.as_slice(), normal.as_slice());
    let row = DMatrix::from_row_slice(1, dim, &functional);
    let basis = linalg::null_space(&row, FIBRE_RANK_RTOL);
    let values = killing::evaluation_matrix(&point) * &basis;
    let pinv = linalg::pseudo_inverse(&jacobian, 1e-14);
    let anchor_matrix = pinv * values;
    let kernel_coords = linalg::null_space(&anchor_matrix, FIBRE_RANK_RTOL);
    let kernel_basis = &basis * kernel_coords;
    Ok(AlgebroidFibre {
        u: u.to_vec(),
        point,
        normal,
        basis,
        anchor_matrix,
        kernel_basis,
        jacobian,
    })
}

/// `#a`: the chart vector `w` with `J w = X_a(x)`.
pub fn anchor(fibre: &AlgebroidFibre, a: &DVector<f64>) -> Result<DVector<f64>> {
    let dim = algebra_dim(fibre.ambient_dim());
    if a.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: a.len(),
        });
    }
    let value = killing::evaluation_matrix(&fibre.point) * a;
    let (w, residual) = linalg::least_squares(&fibre.jacobian, &value);
    if residual > ANCHOR_RESIDUAL_TOL * (1.0 + value.norm()) {
        return Err(GeometryError::NotTangent { residual });
    }
    Ok(w)
}
