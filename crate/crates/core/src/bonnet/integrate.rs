use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::fields::TensorFieldPair;
use super::geometry::frame_form;
use crate::error::{GeometryError, Result};
use crate::linalg;

/// Re-orthonormalize the frame after this many RK4 steps.
pub const REORTHONORMALIZE_EVERY: usize = 16;
/// Largest Gram drift tolerated before a correction.
pub const GRAM_DRIFT_LIMIT: f64 = 1e-3;
/// Default RK4 steps per unit chart length.
pub const DEFAULT_STEPS_PER_UNIT: f64 = 512.0;

/// Homogeneous `(n+2) × (n+2)` matrix `[[E, p], [0, 1]]`: tangent frame and
/// normal in the columns of `E`, position `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    matrix: DMatrix<f64>,
}

impl FrameState {
    /// From the frame `E` (`d × d`) and position `p`.
    pub fn new(frame: &DMatrix<f64>, position: &DVector<f64>) -> Result<Self> {
        let d = position.len();
        if frame.shape() != (d, d) {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                got: frame.nrows(),
            });
        }
        let mut matrix = DMatrix::identity(d + 1, d + 1);
        matrix.view_mut((0, 0), (d, d)).copy_from(frame);
        matrix.view_mut((0, d), (d, 1)).copy_from(position);
        Ok(FrameState { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn frame(&self) -> DMatrix<f64> {
        let d = self.ambient_dim();
        self.matrix.view((0, 0), (d, d)).into_owned()
    }

    pub fn position(&self) -> DVector<f64> {
        let d = self.ambient_dim();
        self.matrix.view((0, d), (d, 1)).column(0).into_owned()
    }

    pub fn normal(&self) -> DVector<f64> {
        let d = self.ambient_dim();
        self.matrix.view((0, d - 1), (d, 1)).column(0).into_owned()
    }

    /// `max |EᵀE − diag(g, 1)|`.
    pub fn gram_drift(&self, g: &DMatrix<f64>) -> f64 {
        let e = self.frame();
        (e.transpose() * &e - target_gram(g)).amax()
    }

    fn set_frame(&mut self, e: &DMatrix<f64>) {
        let d = self.ambient_dim();
        self.matrix.view_mut((0, 0), (d, d)).copy_from(e);
    }
}

fn target_gram(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut t = DMatrix::identity(n + 1, n + 1);
    t.view_mut((0, 0), (n, n)).copy_from(g);
    t
}

/// Frame at `u₀` from the Cholesky factor of `g(u₀)`: tangents in the first
/// `n` coordinates, normal along the last axis, position at the origin.
pub fn initial_frame(fields: &TensorFieldPair, u0: &[f64]) -> Result<FrameState> {
    let g = fields.metric(u0)?;
    let n = g.nrows();
    let l = g
        .cholesky()
        .ok_or_else(|| GeometryError::SingularMetric { point: u0.to_vec() })?
        .l();
    let mut e = DMatrix::identity(n + 1, n + 1);
    e.view_mut((0, 0), (n, n)).copy_from(&l.transpose());
    FrameState::new(&e, &DVector::zeros(n + 1))
}

/// Nearest frame to `E` with `EᵀE = diag(g, 1)`: write `diag(g, 1) = LLᵀ`,
/// take the polar factor `Q` of `E L⁻ᵀ`, return `Q Lᵀ`.
pub fn reorthonormalize(e: &DMatrix<f64>, g: &DMatrix<f64>, u: &[f64]) -> Result<DMatrix<f64>> {
    let l = target_gram(g)
        .cholesky()
        .ok_or_else(|| GeometryError::SingularMetric { point: u.to_vec() })?
        .l();
    let m = l
        .solve_lower_triangular(&e.transpose())
        .expect("Cholesky factor is invertible")
        .transpose();
    let (w, _, v) = linalg::thin_svd(&m);
    let q = w * v.transpose();
    Ok(q * l.transpose())
}

/// Counters from [`integrate_path_with_stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub steps: usize,
    /// Largest drift seen before a correction.
    pub max_drift_before: f64,
    /// Largest drift remaining after a correction.
    pub max_drift_after: f64,
}

impl IntegrationStats {
    pub fn merge(&self, other: &IntegrationStats) -> IntegrationStats {
        IntegrationStats {
            steps: self.steps + other.steps,
            max_drift_before: self.max_drift_before.max(other.max_drift_before),
            max_drift_after: self.max_drift_after.max(other.max_drift_after),
        }
    }
}

/// Integrate `F' = F · Θ(γ)·γ'` along a polyline.
pub fn integrate_path(
    fields: &TensorFieldPair,
    path: &[Vec<f64>],
    initial: &FrameState,
    steps_per_unit: f64,
) -> Result<FrameState> {
    Ok(integrate_path_with_stats(fields, path, initial, steps_per_unit)?.0)
}

/// [`integrate_path`], also returning step and drift counters. Each segment
/// takes `⌈length · steps_per_unit⌉` classical RK4 steps.
pub fn integrate_path_with_stats(
    fields: &TensorFieldPair,
    path: &[Vec<f64>],
    initial: &FrameState,
    steps_per_unit: f64,
) -> Result<(FrameState, IntegrationStats)> {
    if !(steps_per_unit > 0.0) {
        return Err(GeometryError::InvalidParameter("steps per unit length must be positive".into()));
    }
    let n = fields.dim();
    if initial.ambient_dim() != n + 1 {
        return Err(GeometryError::DimensionMismatch {
            expected: n + 1,
            got: initial.ambient_dim(),
        });
    }
    for p in path {
        if p.len() != n {
            return Err(GeometryError::DimensionMismatch { expected: n, got: p.len() });
        }
        if !fields.chart().contains(p) {
            return Err(GeometryError::PathExitsChart { point: p.clone() });
        }
    }

    let mut state = initial.clone();
    let mut stats = IntegrationStats::default();
    let mut since_correction = 0;
    for seg in path.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let length = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if length == 0.0 {
            continue;
        }
        let steps = (length * steps_per_unit).ceil().max(1.0) as usize;
        let h = 1.0 / steps as f64;
        let point = |t: f64| -> Vec<f64> { a.iter().zip(&delta).map(|(x, d)| x + t * d).collect() };
        let generator = |t: f64| -> Result<DMatrix<f64>> {
            let theta = frame_form(fields, &point(t))?;
            Ok(theta
                .iter()
                .zip(&delta)
                .fold(DMatrix::zeros(n + 2, n + 2), |acc, (th, d)| acc + th * *d))
        };
        let mut a0 = generator(0.0)?;
        for s in 0..steps {
            let t = s as f64 * h;
            let f = &state.matrix;
            let a_mid = generator(t + 0.5 * h)?;
            let a1 = generator(t + h)?;
            let k1 = f * &a0;
            let k2 = (f + &k1 * (0.5 * h)) * &a_mid;
            let k3 = (f + &k2 * (0.5 * h)) * &a_mid;
            let k4 = (f + &k3 * h) * &a1;
            state.matrix = f + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            a0 = a1;
            stats.steps += 1;
            since_correction += 1;
            if since_correction == REORTHONORMALIZE_EVERY {
                since_correction = 0;
                let u = point(t + h);
                let g = fields.metric(&u)?;
                let before = state.gram_drift(&g);
                if !(before <= GRAM_DRIFT_LIMIT) {
                    return Err(GeometryError::GramDrift {
                        drift: before,
                        limit: GRAM_DRIFT_LIMIT,
                    });
                }
                let corrected = reorthonormalize(&state.frame(), &g, &u)?;
                state.set_frame(&corrected);
                stats.max_drift_before = stats.max_drift_before.max(before);
                stats.max_drift_after = stats.max_drift_after.max(state.gram_drift(&g));
            }
        }
    }
    Ok((state, stats))
}

/// Closed rectangle in the first two chart axes, other coordinates fixed at
/// those of `a`: `a → (b₀, a₁) → b → (a₀, b₁) → a`.
pub fn rectangle_loop(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let mut p1 = a.to_vec();
    p1[0] = b[0];
    let mut p2 = p1.clone();
    p2[1] = b[1];
    let mut p3 = a.to_vec();
    p3[1] = b[1];
    vec![a.to_vec(), p1, p2, p3, a.to_vec()]
}

/// Frobenius deviation `‖F_final − F_initial‖` after integrating around a
/// closed loop from the Cholesky frame at its start.
pub fn holonomy_loop(fields: &TensorFieldPair, path: &[Vec<f64>], steps_per_unit: f64) -> Result<f64> {
    let (first, last) = match (path.first(), path.last()) {
        (Some(f), Some(l)) if path.len() >= 2 => (f, l),
        _ => return Err(GeometryError::InvalidParameter("loop needs at least two points".into())),
    };
    let gap = first.iter().zip(last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > 1e-12 {
        return Err(GeometryError::InvalidParameter(format!("loop is not closed (gap {gap:e})")));
    }
    let initial = initial_frame(fields, first)?;
    let end = integrate_path(fields, path, &initial, steps_per_unit)?;
    Ok((end.matrix() - initial.matrix()).norm())
}
