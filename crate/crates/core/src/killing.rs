//! The Lie algebra of Killing fields on Euclidean space.
//!
//! A Killing field on `R^d` is the affine vector field `x ↦ S x + v` with `S`
//! skew-symmetric. Fields are stored as the pair `(S, v)`; the canonical
//! coefficient vector lists `S[i][j]` for `i < j` (row-major) followed by `v`,
//! which makes the canonical basis orthonormal for
//! `⟨X, Y⟩ = ½ tr(S_Xᵀ S_Y) + v_X · v_Y`.
//!
//! The bracket is the Jacobi-Lie bracket of vector fields with the convention
//! `[U, V] = (DV)·U − (DU)·V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GeometryError, Result};
use crate::jet::Real;
use crate::linalg;

const SKEW_TOL: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-12;

/// Dimension of the Killing algebra of `R^d`.
pub fn algebra_dim(ambient: usize) -> usize {
    ambient * (ambient + 1) / 2
}

/// Index pairs `(i, j)`, `i < j`, in canonical order.
pub fn skew_pairs(ambient: usize) -> Vec<(usize, usize)> {
    (0..ambient)
        .flat_map(|i| (i + 1..ambient).map(move |j| (i, j)))
        .collect()
}

/// Ambient dimension `d` with `d(d+1)/2 = len`.
pub fn ambient_from_algebra_dim(len: usize) -> Option<usize> {
    (1..64).find(|d| algebra_dim(*d) == len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KillingField {
    s: DMatrix<f64>,
    v: DVector<f64>,
}

impl KillingField {
    pub fn new(s: DMatrix<f64>, v: DVector<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() != v.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: v.len(),
                got: s.nrows(),
            });
        }
        let defect = (&s + s.transpose()).amax();
        if defect > SKEW_TOL {
            return Err(GeometryError::NotSkew { defect });
        }
        Ok(KillingField { s, v })
    }

    pub fn zero(ambient: usize) -> Self {
        KillingField {
            s: DMatrix::zeros(ambient, ambient),
            v: DVector::zeros(ambient),
        }
    }

    pub fn translation(v: DVector<f64>) -> Self {
        let d = v.len();
        KillingField {
            s: DMatrix::zeros(d, d),
            v,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.v.len()
    }

    pub fn rotational(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn translational(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn is_constant(&self) -> bool {
        self.s.amax() == 0.0
    }

    pub fn coefficients(&self) -> DVector<f64> {
        let d = self.ambient_dim();
        let pairs = skew_pairs(d);
        let mut c = DVector::zeros(algebra_dim(d));
        for (k, &(i, j)) in pairs.iter().enumerate() {
            c[k] = self.s[(i, j)];
        }
        c.rows_mut(pairs.len(), d).copy_from(&self.v);
        c
    }

    pub fn from_coefficients(c: &DVector<f64>) -> Result<Self> {
        let d = ambient_from_algebra_dim(c.len()).ok_or(GeometryError::DimensionMismatch {
            expected: algebra_dim(2),
            got: c.len(),
        })?;
        let pairs = skew_pairs(d);
        let mut s = DMatrix::zeros(d, d);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            s[(i, j)] = c[k];
            s[(j, i)] = -c[k];
        }
        let v = c.rows(pairs.len(), d).into_owned();
        Ok(KillingField { s, v })
    }

    /// `⟨X, Y⟩ = ½ tr(S_Xᵀ S_Y) + v_X · v_Y`.
    pub fn inner(&self, other: &KillingField) -> f64 {
        0.5 * self.s.dot(&other.s) + self.v.dot(&other.v)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, k: f64) -> KillingField {
        KillingField {
            s: &self.s * k,
            v: &self.v * k,
        }
    }

    pub fn add(&self, other: &KillingField) -> KillingField {
        KillingField {
            s: &self.s + &other.s,
            v: &self.v + &other.v,
        }
    }

    pub fn sub(&self, other: &KillingField) -> KillingField {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.s.amax().max(self.v.amax())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}

/// `X(x) = S x + v`.
pub fn killing_eval(field: &KillingField, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(field.ambient_dim(), x.len())?;
    Ok(&field.s * x + &field.v)
}

/// Jacobi-Lie bracket: `(S_Y S_X − S_X S_Y, S_Y v_X − S_X v_Y)`.
pub fn killing_bracket(x: &KillingField, y: &KillingField) -> Result<KillingField> {
    check_dim(x.ambient_dim(), y.ambient_dim())?;
    Ok(KillingField {
        s: &y.s * &x.s - &x.s * &y.s,
        v: &y.s * &x.v - &x.s * &y.v,
    })
}

/// Canonical basis of the Killing algebra of `R^{n+1}`: elementary skew
/// generators `E_ij − E_ji` (`i < j`), then the standard translations.
pub fn canonical_basis(n: usize) -> Vec<KillingField> {
    let d = n + 1;
    let mut basis = Vec::with_capacity(algebra_dim(d));
    for (i, j) in skew_pairs(d) {
        let mut s = DMatrix::zeros(d, d);
        s[(i, j)] = 1.0;
        s[(j, i)] = -1.0;
        basis.push(KillingField {
            s,
            v: DVector::zeros(d),
        });
    }
    for k in 0..d {
        let mut v = DVector::zeros(d);
        v[k] = 1.0;
        basis.push(KillingField::translation(v));
    }
    basis
}

// Coefficient-level kernels, generic over f64 and jets.

pub(crate) fn coefficients_to_parts<T: Real>(ambient: usize, c: &[T]) -> (Vec<Vec<T>>, Vec<T>) {
    let pairs = skew_pairs(ambient);
    let mut s = vec![vec![T::zero(); ambient]; ambient];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        s[i][j] = c[k].clone();
        s[j][i] = -c[k].clone();
    }
    let v = c[pairs.len()..].to_vec();
    (s, v)
}

fn mat_vec<T: Real>(s: &[Vec<T>], x: &[T]) -> Vec<T> {
    s.iter().map(|row| linalg::dot(row, x)).collect()
}

fn mat_mat<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let d = a.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    (0..d).fold(T::zero(), |acc, k| acc + a[i][k].clone() * b[k][j].clone())
                })
                .collect()
        })
        .collect()
}

/// `X(x)` for a field given by canonical coefficients.
pub fn eval_coefficients<T: Real>(ambient: usize, c: &[T], x: &[T]) -> Vec<T> {
    let (s, v) = coefficients_to_parts(ambient, c);
    mat_vec(&s, x)
        .into_iter()
        .zip(v)
        .map(|(a, b)| a + b)
        .collect()
}

/// Bracket on canonical coefficient vectors.
pub fn bracket_coefficients<T: Real>(ambient: usize, a: &[T], b: &[T]) -> Vec<T> {
    let (sa, va) = coefficients_to_parts(ambient, a);
    let (sb, vb) = coefficients_to_parts(ambient, b);
    let ba = mat_mat(&sb, &sa);
    let ab = mat_mat(&sa, &sb);
    let v: Vec<T> = mat_vec(&sb, &va)
        .into_iter()
        .zip(mat_vec(&sa, &vb))
        .map(|(x, y)| x - y)
        .collect();
    let mut out: Vec<T> = skew_pairs(ambient)
        .into_iter()
        .map(|(i, j)| ba[i][j].clone() - ab[i][j].clone())
        .collect();
    out.extend(v);
    out
}

/// Row functional `c ↦ ⟨X_c(x), ν⟩` on canonical coefficients.
pub fn tangency_functional<T: Real>(x: &[T], normal: &[T]) -> Vec<T> {
    let d = x.len();
    let mut row: Vec<T> = skew_pairs(d)
        .into_iter()
        .map(|(i, j)| normal[i].clone() * x[j].clone() - normal[j].clone() * x[i].clone())
        .collect();
    row.extend(normal.iter().cloned());
    row
}

/// Coefficient map `c ↦ X_c(x)` as a `d × dim g` matrix.
pub fn evaluation_matrix(x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let pairs = skew_pairs(d);
    let mut m = DMatrix::zeros(d, algebra_dim(d));
    for (k, &(i, j)) in pairs.iter().enumerate() {
        m[(i, k)] = x[j];
        m[(j, k)] = -x[i];
    }
    for r in 0..d {
        m[(r, pairs.len() + r)] = 1.0;
    }
    m
}

/// Orientation-preserving rigid motion `x ↦ R x + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMotion {
    r: DMatrix<f64>,
    t: DVector<f64>,
}

impl RigidMotion {
    pub fn new(r: DMatrix<f64>, t: DVector<f64>) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() != t.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: t.len(),
                got: r.nrows(),
            });
        }
        let d = t.len();
        let orthogonality = (r.transpose() * &r - DMatrix::identity(d, d)).amax();
        let det = r.determinant();
        if orthogonality > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL * d as f64 {
            return Err(GeometryError::NotRotation { orthogonality, det });
        }
        Ok(RigidMotion { r, t })
    }

    pub(crate) fn new_unchecked(r: DMatrix<f64>, t: DVector<f64>) -> Self {
        RigidMotion { r, t }
    }

    pub fn identity(ambient: usize) -> Self {
        RigidMotion {
            r: DMatrix::identity(ambient, ambient),
            t: DVector::zeros(ambient),
        }
    }

    pub fn translation(t: DVector<f64>) -> Self {
        let d = t.len();
        RigidMotion {
            r: DMatrix::identity(d, d),
            t,
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn translation_part(&self) -> &DVector<f64> {
        &self.t
    }

    pub fn ambient_dim(&self) -> usize {
        self.t.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.r * x + &self.t
    }

    pub fn inverse(&self) -> RigidMotion {
        let rt = self.r.transpose();
        let t = -(&rt * &self.t);
        RigidMotion { r: rt, t }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion {
            r: &self.r * &other.r,
            t: &self.r * &other.t + &self.t,
        }
    }
}

/// Pushforward `Ad_φ X = (R S Rᵀ, R v − R S Rᵀ t)`, characterised by
/// `(Ad_φ X)(φ(x)) = R · X(x)`.
pub fn adjoint_pushforward(phi: &RigidMotion, x: &KillingField) -> Result<KillingField> {
    check_dim(phi.ambient_dim(), x.ambient_dim())?;
    let s = &phi.r * &x.s * phi.r.transpose();
    let v = &phi.r * &x.v - &s * &phi.t;
    Ok(KillingField { s, v })
}

/// Linear subspace of the Killing algebra with an independent basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<KillingField>,
}

impl Subspace {
    pub fn new(ambient: usize, basis: Vec<KillingField>) -> Result<Self> {
        for b in &basis {
            check_dim(ambient, b.ambient_dim())?;
        }
        let sub = Subspace { ambient, basis };
        let rank = linalg::numerical_rank(&sub.coefficient_matrix(), linalg::RANK_RTOL);
        if rank < sub.basis.len() {
            return Err(GeometryError::DegenerateSystem {
                rank,
                needed: sub.basis.len(),
            });
        }
        Ok(sub)
    }

    /// Subspace spanned by the columns of a canonical-coefficient matrix.
    pub fn from_coefficient_columns(ambient: usize, m: &DMatrix<f64>) -> Result<Self> {
        let basis = m
            .column_iter()
            .map(|c| KillingField::from_coefficients(&c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Subspace::new(ambient, basis)
    }

    /// The translations (constant fields).
    pub fn radical(ambient: usize) -> Self {
        let basis = canonical_basis(ambient - 1)
            .into_iter()
            .filter(KillingField::is_constant)
            .collect();
        Subspace { ambient, basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[KillingField] {
        &self.basis
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(algebra_dim(self.ambient), self.basis.len());
        for (k, b) in self.basis.iter().enumerate() {
            m.set_column(k, &b.coefficients());
        }
        m
    }
}

/// Killing fields vanishing at `m`: `(S, −S m)` over the skew basis.
pub fn isotropy_basis(m: &DVector<f64>) -> Subspace {
    let d = m.len();
    let basis = canonical_basis(d - 1)
        .into_iter()
        .filter(|b| !b.is_constant())
        .map(|b| {
            let v = -(&b.s * m);
            KillingField { s: b.s, v }
        })
        .collect();
    Subspace { ambient: d, basis }
}

/// Common zero of a subspace, found as the least-squares solution of the
/// stacked system `S_i m + v_i = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonZero {
    pub point: DVector<f64>,
    pub residual: f64,
}

pub fn common_zero(w: &Subspace) -> Result<CommonZero> {
    let d = w.ambient;
    let k = w.basis.len();
    let mut a = DMatrix::zeros(k * d, d);
    let mut b = DVector::zeros(k * d);
    for (i, field) in w.basis.iter().enumerate() {
        a.view_mut((i * d, 0), (d, d)).copy_from(&field.s);
        b.rows_mut(i * d, d).copy_from(&(-&field.v));
    }
    let (point, residual) = linalg::least_squares(&a, &b);
    if residual > 1e-8 * (1.0 + point.norm()) {
        return Err(GeometryError::NoCommonZero { residual });
    }
    let rank = linalg::numerical_rank(&a, linalg::RANK_RTOL);
    if rank < d {
        return Err(GeometryError::DegenerateSystem { rank, needed: d });
    }
    Ok(CommonZero { point, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transversality {
    pub transverse: bool,
    /// `dim g − rank(W + rad g)`.
    pub defect: usize,
}

/// Whether `W + rad g = g`.
pub fn transverse_to_radical(w: &Subspace) -> Transversality {
    let d = w.ambient;
    let dim = algebra_dim(d);
    let wm = w.coefficient_matrix();
    let mut m = DMatrix::zeros(dim, wm.ncols() + d);
    m.view_mut((0, 0), (dim, wm.ncols())).copy_from(&wm);
    for r in 0..d {
        m[(dim - d + r, wm.ncols() + r)] = 1.0;
    }
    let rank = linalg::numerical_rank(&m, linalg::RANK_RTOL);
    Transversality {
        transverse: rank == dim,
        defect: dim - rank.min(dim),
    }
}

// JSON forms: {"S": row-major array, "v": array} and {"R": ..., "t": ...}.

#[derive(Serialize, Deserialize)]
struct KillingFieldJson {
    #[serde(rename = "S")]
    s: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RigidMotionJson {
    #[serde(rename = "R")]
    r: Vec<f64>,
    t: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn square_from_row_major<E: serde::de::Error>(data: &[f64], d: usize) -> Result<DMatrix<f64>, E> {
    if data.len() != d * d {
        return Err(E::custom(format!(
            "expected {} matrix entries for dimension {d}, got {}",
            d * d,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(d, d, data))
}

impl Serialize for KillingField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        KillingFieldJson {
            s: row_major(&self.s),
            v: self.v.as_slice().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KillingField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = KillingFieldJson::deserialize(deserializer)?;
        let s = square_from_row_major(&raw.s, raw.v.len())?;
        KillingField::new(s, DVector::from_vec(raw.v)).map_err(serde::de::Error::custom)
    }
}

impl Serialize for RigidMotion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RigidMotionJson {
            r: row_major(&self.r),
            t: self.t.as_slice().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidMotion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RigidMotionJson::deserialize(deserializer)?;
        let r = square_from_row_major(&raw.r, raw.t.len())?;
        RigidMotion::new(r, DVector::from_vec(raw.t)).map_err(serde::de::Error::custom)
    }
}
