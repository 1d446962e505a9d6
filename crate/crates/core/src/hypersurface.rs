//! Parametrized hypersurface patches `f: U ⊂ R^n → R^{n+1}` with derivatives,
//! oriented Gauss map, and the classical fundamental forms.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::jet::{Jet, Real};
use crate::killing::RigidMotion;
use crate::linalg;

/// Relative step for finite-difference first derivatives.
pub const FIRST_DERIVATIVE_STEP: f64 = 1e-6;
/// Absolute step for finite-difference second derivatives.
pub const SECOND_DERIVATIVE_STEP: f64 = 1e-4;
/// Smallest admissible σ_min/σ_max of the Jacobian.
pub const IMMERSION_RTOL: f64 = 1e-8;

/// Axis-aligned box `U ⊂ R^n` with a sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    lower: Vec<f64>,
    upper: Vec<f64>,
    grid: Vec<usize>,
}

impl Chart {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, grid: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || grid.len() != n {
            return Err(GeometryError::InvalidParameter(format!(
                "chart needs matching non-empty corners and grid, got {} / {} / {}",
                lower.len(),
                upper.len(),
                grid.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(GeometryError::InvalidParameter(
                "chart corners must satisfy lower < upper".into(),
            ));
        }
        if grid.iter().any(|&g| g < 2) {
            return Err(GeometryError::InvalidParameter(
                "chart grid needs at least 2 samples per axis".into(),
            ));
        }
        Ok(Chart { lower, upper, grid })
    }

    pub fn uniform(lower: f64, upper: f64, n: usize, grid: usize) -> Result<Self> {
        Chart::new(vec![lower; n], vec![upper; n], vec![grid; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn with_grid(&self, grid: Vec<usize>) -> Result<Self> {
        Chart::new(self.lower.clone(), self.upper.clone(), grid)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Signed distance to the nearest face (negative outside).
    pub fn margin(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| (x - lo).min(hi - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        let k = self.grid[axis];
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.grid[axis] - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.grid.iter().product()
    }

    /// Multi-index of the `flat`-th node; the first axis varies slowest.
    pub fn node_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.grid[axis];
            flat /= self.grid[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.grid)
            .fold(0, |acc, (&i, &g)| acc * g + i)
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| {
                let (lo, hi) = (self.lower[axis], self.upper[axis]);
                lo + (hi - lo) * i as f64 / (self.grid[axis] - 1) as f64
            })
            .collect()
    }

    /// Diagonal length of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// A smooth map `U → R^{n+1}`.
///
/// Only [`Immersion::eval`] is required. Implementations that can expand
/// themselves as jets get exact derivatives of every order everywhere.
pub trait Immersion: Send + Sync {
    fn intrinsic_dim(&self) -> usize;

    fn eval(&self, u: &[f64]) -> DVector<f64>;

    fn jacobian(&self, _u: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// One `n × n` matrix per output component.
    fn hessian(&self, _u: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn taylor(&self, _u: &[f64], _order: usize) -> Option<Vec<Jet>> {
        None
    }
}

/// Maps written once over any [`Real`] scalar.
pub trait GenericMap: Send + Sync {
    fn intrinsic_dim(&self) -> usize;
    fn map<T: Real>(&self, u: &[T]) -> Vec<T>;
}

/// Adapter giving a [`GenericMap`] exact jet derivatives.
pub struct JetImmersion<M>(pub M);

impl<M: GenericMap> Immersion for JetImmersion<M> {
    fn intrinsic_dim(&self) -> usize {
        self.0.intrinsic_dim()
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.0.map(u))
    }

    fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        let jets = self.taylor(u, 1)?;
        Some(DMatrix::from_fn(jets.len(), u.len(), |r, c| jets[r].partial(c)))
    }

    fn hessian(&self, u: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let jets = self.taylor(u, 2)?;
        Some(
            jets.iter()
                .map(|j| DMatrix::from_fn(u.len(), u.len(), |a, b| j.second_partial(a, b)))
                .collect(),
        )
    }

    fn taylor(&self, u: &[f64], order: usize) -> Option<Vec<Jet>> {
        Some(self.0.map(&Jet::seed(u, order)))
    }
}

type VecFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync;

/// Closure-backed immersion with optional analytic Jacobian and Hessian.
pub struct FnImmersion {
    n: usize,
    f: Box<VecFn>,
    jacobian: Option<Box<MatFn>>,
    hessian: Option<Box<HessFn>>,
}

impl FnImmersion {
    pub fn new(n: usize, f: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        FnImmersion {
            n,
            f: Box::new(f),
            jacobian: None,
            hessian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(j));
        self
    }

    pub fn with_hessian(
        mut self,
        h: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }
}

impl Immersion for FnImmersion {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }
    fn eval(&self, u: &[f64]) -> DVector<f64> {
        (self.f)(u)
    }
    fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(u))
    }
    fn hessian(&self, u: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        self.hessian.as_ref().map(|h| h(u))
    }
}

/// `φ ∘ f` for a rigid motion `φ`.
struct MovedImmersion {
    inner: Arc<dyn Immersion>,
    motion: RigidMotion,
}

impl Immersion for MovedImmersion {
    fn intrinsic_dim(&self) -> usize {
        self.inner.intrinsic_dim()
    }

    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.motion.apply(&self.inner.eval(u))
    }

    fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
        self.inner.jacobian(u).map(|j| self.motion.rotation() * j)
    }

    fn hessian(&self, u: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let h = self.inner.hessian(u)?;
        let r = self.motion.rotation();
        Some(
            (0..h.len())
                .map(|row| {
                    h.iter()
                        .enumerate()
                        .fold(DMatrix::zeros(u.len(), u.len()), |acc, (k, hk)| {
                            acc + hk * r[(row, k)]
                        })
                })
                .collect(),
        )
    }

    fn taylor(&self, u: &[f64], order: usize) -> Option<Vec<Jet>> {
        let jets = self.inner.taylor(u, order)?;
        let r = self.motion.rotation();
        let t = self.motion.translation_part();
        Some(
            (0..jets.len())
                .map(|row| {
                    jets.iter()
                        .enumerate()
                        .fold(Jet::constant(t[row]), |acc, (k, j)| acc + j.scale(r[(row, k)]))
                })
                .collect(),
        )
    }
}

/// Value-only view of another immersion; forces finite differences.
struct ValuesOnly(Arc<dyn Immersion>);

impl Immersion for ValuesOnly {
    fn intrinsic_dim(&self) -> usize {
        self.0.intrinsic_dim()
    }
    fn eval(&self, u: &[f64]) -> DVector<f64> {
        self.0.eval(u)
    }
}

/// An oriented parametrized hypersurface patch.
#[derive(Clone)]
pub struct HypersurfacePatch {
    name: String,
    chart: Chart,
    map: Arc<dyn Immersion>,
    orientation: f64,
}

impl fmt::Debug for HypersurfacePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HypersurfacePatch")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl HypersurfacePatch {
    pub fn new(
        name: impl Into<String>,
        chart: Chart,
        map: Arc<dyn Immersion>,
        orientation: f64,
    ) -> Result<Self> {
        if map.intrinsic_dim() != chart.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: chart.dim(),
                got: map.intrinsic_dim(),
            });
        }
        if orientation != 1.0 && orientation != -1.0 {
            return Err(GeometryError::InvalidParameter(format!(
                "orientation must be ±1, got {orientation}"
            )));
        }
        Ok(HypersurfacePatch {
            name: name.into(),
            chart,
            map,
            orientation,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn with_chart(&self, chart: Chart) -> Result<Self> {
        HypersurfacePatch::new(self.name.clone(), chart, self.map.clone(), self.orientation)
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn with_orientation(&self, orientation: f64) -> Result<Self> {
        HypersurfacePatch::new(self.name.clone(), self.chart.clone(), self.map.clone(), orientation)
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim() + 1
    }

    /// Whether the immersion supplies jets (exact derivatives of all orders).
    pub fn has_jets(&self) -> bool {
        self.map.taylor(&self.chart.center(), 0).is_some()
    }

    /// The patch `φ ∘ f`.
    pub fn moved(&self, motion: &RigidMotion) -> Result<Self> {
        if motion.ambient_dim() != self.ambient_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.ambient_dim(),
                got: motion.ambient_dim(),
            });
        }
        HypersurfacePatch::new(
            format!("{}-moved", self.name),
            self.chart.clone(),
            Arc::new(MovedImmersion {
                inner: self.map.clone(),
                motion: motion.clone(),
            }),
            self.orientation,
        )
    }

    /// Same patch with analytic derivatives stripped.
    pub fn finite_difference_only(&self) -> Self {
        HypersurfacePatch {
            name: self.name.clone(),
            chart: self.chart.clone(),
            map: Arc::new(ValuesOnly(self.map.clone())),
            orientation: self.orientation,
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn position(&self, u: &[f64]) -> Result<DVector<f64>> {
        self.check_point(u)?;
        Ok(self.map.eval(u))
    }

    pub fn taylor(&self, u: &[f64], order: usize) -> Option<Vec<Jet>> {
        self.map.taylor(u, order)
    }

    fn raw_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        if let Some(j) = self.map.jacobian(u) {
            return j;
        }
        let n = u.len();
        let mut jac = DMatrix::zeros(self.ambient_dim(), n);
        let mut shifted = u.to_vec();
        for i in 0..n {
            let h = FIRST_DERIVATIVE_STEP * u[i].abs().max(1.0);
            shifted[i] = u[i] + h;
            let plus = self.map.eval(&shifted);
            shifted[i] = u[i] - h;
            let minus = self.map.eval(&shifted);
            shifted[i] = u[i];
            jac.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        jac
    }

    /// Differential of the immersion, `(n+1) × n`.
    pub fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(u)?;
        let jac = self.raw_jacobian(u);
        let s = linalg::singular_values(&jac);
        let ratio = s.last().copied().unwrap_or(0.0) / s.first().copied().unwrap_or(1.0);
        if !(ratio > IMMERSION_RTOL) {
            return Err(GeometryError::RankDeficient {
                point: u.to_vec(),
                ratio,
            });
        }
        Ok(jac)
    }

    /// Second derivatives: one `n × n` matrix per ambient component.
    pub fn hessian(&self, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(u)?;
        if let Some(h) = self.map.hessian(u) {
            return Ok(h);
        }
        let n = u.len();
        let h = SECOND_DERIVATIVE_STEP;
        let d = self.ambient_dim();
        let mut out = vec![DMatrix::zeros(n, n); d];
        let at = |offsets: &[(usize, f64)]| {
            let mut p = u.to_vec();
            for &(axis, delta) in offsets {
                p[axis] += delta;
            }
            self.map.eval(&p)
        };
        let center = self.map.eval(u);
        for i in 0..n {
            let second = (at(&[(i, h)]) - 2.0 * &center + at(&[(i, -h)])) / (h * h);
            for (k, m) in out.iter_mut().enumerate() {
                m[(i, i)] = second[k];
            }
            for j in i + 1..n {
                let mixed = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                    + at(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h);
                for (k, m) in out.iter_mut().enumerate() {
                    m[(i, j)] = mixed[k];
                    m[(j, i)] = mixed[k];
                }
            }
        }
        Ok(out)
    }

    /// Unit normal with `det[J | ν] · orientation > 0`.
    pub fn gauss_map(&self, u: &[f64]) -> Result<DVector<f64>> {
        let jac = self.jacobian(u)?;
        Ok(orient_normal(&jac, linalg::left_null_vector(&jac), self.orientation))
    }

    /// Jets of the oriented unit normal, built from signed minors of the
    /// Jacobian jets.
    pub fn normal_taylor(&self, u: &[f64], order: usize) -> Option<Vec<Jet>> {
        let f = self.taylor(u, order + 1)?;
        let cols: Vec<Vec<Jet>> = (0..self.dim())
            .map(|c| f.iter().map(|fk| fk.derivative(c)).collect())
            .collect();
        Some(
            linalg::generic_cofactor_normal(&cols)
                .into_iter()
                .map(|x| x.scale(self.orientation))
                .collect(),
        )
    }

    /// `g = JᵀJ`.
    pub fn classical_first_form(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let jac = self.jacobian(u)?;
        Ok(jac.transpose() * jac)
    }

    /// `II_ij = ⟨∂²f/∂u_i∂u_j, ν⟩`.
    pub fn classical_second_form(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let nu = self.gauss_map(u)?;
        let hess = self.hessian(u)?;
        let n = self.dim();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            hess.iter().enumerate().map(|(k, h)| h[(i, j)] * nu[k]).sum()
        }))
    }

    /// `(g, II)` together, from one second-order jet when the immersion has
    /// jets. The normal is the oriented cofactor vector, so no SVD is needed.
    pub fn classical_forms(&self, u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_point(u)?;
        let Some(jets) = self.map.taylor(u, 2) else {
            return Ok((self.classical_first_form(u)?, self.classical_second_form(u)?));
        };
        let n = self.dim();
        let jac = DMatrix::from_fn(jets.len(), n, |r, c| jets[r].partial(c));
        let g = jac.transpose() * &jac;
        self.check_metric_rank(u, &g)?;
        let cols: Vec<Vec<f64>> = (0..n).map(|c| jac.column(c).iter().copied().collect()).collect();
        let mut nu = DVector::from_vec(linalg::generic_cofactor_normal(&cols));
        nu *= self.orientation / nu.norm();
        let ii = DMatrix::from_fn(n, n, |i, j| jets.iter().zip(nu.iter()).map(|(f, v)| f.second_partial(i, j) * v).sum());
        Ok((g, ii))
    }

    /// `g = JᵀJ` with the rank test done on `g` itself.
    pub fn classical_metric(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(u)?;
        let jac = self.raw_jacobian(u);
        let g = jac.transpose() * &jac;
        self.check_metric_rank(u, &g)?;
        Ok(g)
    }

    /// Singular-value ratio of `J` read off the eigenvalues of `JᵀJ`.
    fn check_metric_rank(&self, u: &[f64], g: &DMatrix<f64>) -> Result<()> {
        let eig = g.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let ratio = (lo.max(0.0) / hi).sqrt();
        if !(ratio > IMMERSION_RTOL) {
            return Err(GeometryError::RankDeficient {
                point: u.to_vec(),
                ratio,
            });
        }
        Ok(())
    }

    /// Chart coordinates `w` of an ambient vector `y ≈ J w`, with residual.
    pub fn tangent_coordinates(
        &self,
        u: &[f64],
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, f64)> {
        let jac = self.jacobian(u)?;
        Ok(linalg::least_squares(&jac, y))
    }
}

pub(crate) fn orient_normal(jac: &DMatrix<f64>, mut nu: DVector<f64>, orientation: f64) -> DVector<f64> {
    let (d, n) = jac.shape();
    let mut m = DMatrix::zeros(d, d);
    m.view_mut((0, 0), (d, n)).copy_from(jac);
    m.set_column(n, &nu);
    if m.determinant() * orientation < 0.0 {
        nu = -nu;
    }
    nu
}

// ---------------------------------------------------------------------------
// Presets

pub const PRESET_NAMES: [&str; 5] = ["plane", "sphere", "cylinder", "graph", "torus"];

/// Margin kept between preset charts and parametrization singularities.
const CHART_MARGIN: f64 = 0.2;
const DEFAULT_GRID: usize = 33;

struct Plane {
    n: usize,
}

impl GenericMap for Plane {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }
    fn map<T: Real>(&self, u: &[T]) -> Vec<T> {
        let mut out = u.to_vec();
        out.push(T::zero());
        out
    }
}

/// Hyperspherical coordinates, cyclically shifted so that for `n = 2` the
/// chart `(θ, φ)` gives `R (sinθ cosφ, sinθ sinφ, cosθ)`.
struct Sphere {
    n: usize,
    radius: f64,
}

impl GenericMap for Sphere {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }
    fn map<T: Real>(&self, u: &[T]) -> Vec<T> {
        let n = self.n;
        let mut coords = Vec::with_capacity(n + 1);
        let mut sines = T::cst(self.radius);
        for a in &u[..n - 1] {
            coords.push(sines.clone() * a.cos());
            sines = sines * a.sin();
        }
        coords.push(sines.clone() * u[n - 1].cos());
        coords.push(sines * u[n - 1].sin());
        coords.rotate_left(1);
        coords
    }
}

struct Cylinder {
    n: usize,
    radius: f64,
}

impl GenericMap for Cylinder {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }
    fn map<T: Real>(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![u[0].cos().scale(self.radius), u[0].sin().scale(self.radius)];
        out.extend(u[1..].iter().cloned());
        out
    }
}

/// Graph of `h(u) = a/2 |u|² + c u₁³`.
struct Graph {
    n: usize,
    a: f64,
    c: f64,
}

impl GenericMap for Graph {
    fn intrinsic_dim(&self) -> usize {
        self.n
    }
    fn map<T: Real>(&self, u: &[T]) -> Vec<T> {
        let sq = linalg::dot(u, u);
        let cube = u[0].clone() * u[0].clone() * u[0].clone();
        let h = sq.scale(0.5 * self.a) + cube.scale(self.c);
        let mut out = u.to_vec();
        out.push(h);
        out
    }
}

struct Torus {
    major: f64,
    minor: f64,
}

impl GenericMap for Torus {
    fn intrinsic_dim(&self) -> usize {
        2
    }
    fn map<T: Real>(&self, u: &[T]) -> Vec<T> {
        let ring = T::cst(self.major) + u[1].cos().scale(self.minor);
        vec![
            ring.clone() * u[0].cos(),
            ring * u[0].sin(),
            u[1].sin().scale(self.minor),
        ]
    }
}

/// Catalogue entry describing one preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Supported intrinsic dimensions (`None`: any `n ≥ 1`).
    pub dims: Option<Vec<usize>>,
    /// Parameter names with their defaults.
    pub params: BTreeMap<&'static str, f64>,
}

/// Every preset with its parameters and defaults.
pub fn preset_catalogue() -> Vec<PresetInfo> {
    let entry = |name, description, dims: Option<Vec<usize>>, params: &[(&'static str, f64)]| PresetInfo {
        name,
        description,
        dims,
        params: params.iter().copied().collect(),
    };
    vec![
        entry("plane", "linear inclusion u -> (u, 0) over [-1, 1]^n", None, &[]),
        entry(
            "sphere",
            "round sphere of radius R in hyperspherical angles, polar angles in [0.2, pi - 0.2]",
            None,
            &[("R", 1.0)],
        ),
        entry("cylinder", "S^1(R) x R^(n-1), angle first", None, &[("R", 1.0)]),
        entry("graph", "graph of a/2 |u|^2 + c u_0^3 over [-1, 1]^n", None, &[("a", 1.0), ("c", 0.0)]),
        entry("torus", "torus of revolution with radii R > r", Some(vec![2]), &[("R", 2.0), ("r", 0.5)]),
    ]
}

/// Named preset with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub grid: Option<usize>,
}

impl PresetSpec {
    pub fn new(name: impl Into<String>, n: usize) -> Self {
        PresetSpec {
            name: name.into(),
            n,
            params: BTreeMap::new(),
            grid: None,
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(GeometryError::InvalidParameter(format!(
                "preset '{}' has no parameter '{k}' (accepted: {})",
                self.name,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(GeometryError::InvalidParameter(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

/// Orientation making the given outward direction the Gauss map at the chart
/// centre.
fn outward_orientation(map: &dyn Immersion, u: &[f64], outward: &DVector<f64>) -> f64 {
    let jac = map.jacobian(u).expect("presets supply jets");
    let (d, n) = jac.shape();
    let mut m = DMatrix::zeros(d, d);
    m.view_mut((0, 0), (d, n)).copy_from(&jac);
    m.set_column(n, outward);
    if m.determinant() > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Build a preset patch with exact (jet) derivatives.
pub fn preset(spec: &PresetSpec) -> Result<HypersurfacePatch> {
    let n = spec.n;
    if n == 0 {
        return Err(GeometryError::InvalidParameter("n must be at least 1".into()));
    }
    let grid = vec![spec.grid.unwrap_or(DEFAULT_GRID); n];
    let pi = std::f64::consts::PI;
    let azimuth = (-pi + CHART_MARGIN, pi - CHART_MARGIN);
    let (map, chart, orientation): (Arc<dyn Immersion>, Chart, f64) = match spec.name.as_str() {
        "plane" => {
            spec.check_keys(&[])?;
            let chart = Chart::new(vec![-1.0; n], vec![1.0; n], grid)?;
            (Arc::new(JetImmersion(Plane { n })), chart, 1.0)
        }
        "sphere" => {
            spec.check_keys(&["R"])?;
            let radius = positive("R", spec.get("R", 1.0))?;
            let mut lower = vec![CHART_MARGIN; n];
            let mut upper = vec![pi - CHART_MARGIN; n];
            lower[n - 1] = azimuth.0;
            upper[n - 1] = azimuth.1;
            let chart = Chart::new(lower, upper, grid)?;
            let map: Arc<dyn Immersion> = Arc::new(JetImmersion(Sphere { n, radius }));
            let c = chart.center();
            let outward = map.eval(&c) / radius;
            let o = outward_orientation(map.as_ref(), &c, &outward);
            (map, chart, o)
        }
        "cylinder" => {
            spec.check_keys(&["R"])?;
            let radius = positive("R", spec.get("R", 1.0))?;
            let mut lower = vec![-1.0; n];
            let mut upper = vec![1.0; n];
            lower[0] = azimuth.0;
            upper[0] = azimuth.1;
            let chart = Chart::new(lower, upper, grid)?;
            let map: Arc<dyn Immersion> = Arc::new(JetImmersion(Cylinder { n, radius }));
            let c = chart.center();
            let mut outward = DVector::zeros(n + 1);
            outward[0] = c[0].cos();
            outward[1] = c[0].sin();
            let o = outward_orientation(map.as_ref(), &c, &outward);
            (map, chart, o)
        }
        "graph" => {
            spec.check_keys(&["a", "c"])?;
            let chart = Chart::new(vec![-1.0; n], vec![1.0; n], grid)?;
            let map = Graph {
                n,
                a: spec.get("a", 1.0),
                c: spec.get("c", 0.0),
            };
            (Arc::new(JetImmersion(map)), chart, 1.0)
        }
        "torus" => {
            spec.check_keys(&["R", "r"])?;
            if n != 2 {
                return Err(GeometryError::InvalidParameter(format!(
                    "torus is two-dimensional, got n = {n}"
                )));
            }
            let major = positive("R", spec.get("R", 2.0))?;
            let minor = positive("r", spec.get("r", 0.5))?;
            if minor >= major {
                return Err(GeometryError::InvalidParameter(
                    "torus needs r < R to be immersed".into(),
                ));
            }
            let chart = Chart::new(vec![azimuth.0; 2], vec![azimuth.1; 2], grid)?;
            let map: Arc<dyn Immersion> = Arc::new(JetImmersion(Torus { major, minor }));
            let c = chart.center();
            let outward =
                DVector::from_vec(vec![c[1].cos() * c[0].cos(), c[1].cos() * c[0].sin(), c[1].sin()]);
            let o = outward_orientation(map.as_ref(), &c, &outward);
            (map, chart, o)
        }
        other => {
            return Err(GeometryError::UnknownPreset {
                name: other.to_string(),
            })
        }
    };
    HypersurfacePatch::new(spec.name.clone(), chart, map, orientation)
}

/// Shorthand for `preset(&PresetSpec::new(name, n))`.
pub fn preset_named(name: &str, n: usize) -> Result<HypersurfacePatch> {
    preset(&PresetSpec::new(name, n))
}

/// Graph patch `u ↦ (u, h(u))` over `[-1, 1]^n` for any [`GenericMap`]-style
/// height function.
pub fn graph_patch<H>(n: usize, height: H) -> Result<HypersurfacePatch>
where
    H: Fn(&[Jet]) -> Jet + Send + Sync + 'static,
{
    struct Custom<H> {
        n: usize,
        height: H,
    }
    impl<H: Fn(&[Jet]) -> Jet + Send + Sync> Immersion for Custom<H> {
        fn intrinsic_dim(&self) -> usize {
            self.n
        }
        fn eval(&self, u: &[f64]) -> DVector<f64> {
            let jets: Vec<Jet> = u.iter().map(|&x| Jet::constant(x)).collect();
            let mut out = u.to_vec();
            out.push((self.height)(&jets).value());
            DVector::from_vec(out)
        }
        fn jacobian(&self, u: &[f64]) -> Option<DMatrix<f64>> {
            let jets = self.taylor(u, 1)?;
            Some(DMatrix::from_fn(jets.len(), u.len(), |r, c| jets[r].partial(c)))
        }
        fn hessian(&self, u: &[f64]) -> Option<Vec<DMatrix<f64>>> {
            let jets = self.taylor(u, 2)?;
            Some(
                jets.iter()
                    .map(|j| DMatrix::from_fn(u.len(), u.len(), |a, b| j.second_partial(a, b)))
                    .collect(),
            )
        }
        fn taylor(&self, u: &[f64], order: usize) -> Option<Vec<Jet>> {
            let mut seed = Jet::seed(u, order);
            let h = (self.height)(&seed);
            seed.push(h);
            Some(seed)
        }
    }
    let chart = Chart::new(vec![-1.0; n], vec![1.0; n], vec![DEFAULT_GRID; n])?;
    HypersurfacePatch::new("graph", chart, Arc::new(Custom { n, height }), 1.0)
}
