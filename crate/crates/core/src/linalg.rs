//! Dense linear-algebra helpers: SVD-based rank and null spaces, least
//! squares, principal angles, and small generic solvers that also run on jets.

use nalgebra::{DMatrix, DVector};

use crate::jet::Real;

/// Relative threshold used for numerical rank decisions unless a caller
/// supplies its own.
pub const RANK_RTOL: f64 = 1e-10;

/// Sweeps after which the Jacobi iteration gives up; small matrices converge
/// in well under ten.
const JACOBI_MAX_SWEEPS: usize = 60;

/// Thin SVD `a = U diag(s) Vᵀ` with `s` in descending order; `U` has
/// orthonormal columns even where `s` vanishes.
///
/// One-sided Jacobi rather than a library routine: nalgebra's SVD returned
/// wrong factors for a well-conditioned 5 × 2 anchor matrix (reconstruction
/// error 0.35), and faer's reported no convergence on a 6 × 6 system with
/// paired singular values. Jacobi is exact to round-off on the small,
/// highly structured matrices used here.
pub fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    if rows < cols {
        let (u, s, v) = thin_svd(&a.transpose());
        return (v, s, u);
    }
    if cols == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(0, 0));
    }
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let v = DMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    // Columns with negligible norm carry no direction; complete U instead.
    let live = s.iter().take_while(|&&x| x > f64::EPSILON * top && x > 0.0).count();
    let mut u = DMatrix::zeros(rows, cols);
    for (c, &i) in order.iter().take(live).enumerate() {
        u.set_column(c, &(w.column(i) / norms[i]));
    }
    if live < cols {
        let fill = complement(&u.columns(0, live).into_owned(), rows);
        u.columns_mut(live, cols - live).copy_from(&fill.columns(0, cols - live));
    }
    (u, s, v)
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, p)], m[(r, q)]);
        m[(r, p)] = c * x - s * y;
        m[(r, q)] = s * x + c * y;
    }
}

/// Moore-Penrose pseudo-inverse, dropping singular values below
/// `rtol · σ_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (u, s, v) = thin_svd(a);
    let cut = cutoff(&s, rtol);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &si) in s.iter().enumerate() {
        if si > cut {
            out += v.column(i) * u.column(i).transpose() / si;
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of the orthonormal columns
/// of `q` in `R^m`, from the eigenvectors of the projector `I − q qᵀ` with
/// eigenvalue one. The spectrum is exactly {0, 1}, so the split is robust.
fn complement(q: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let k = m - q.ncols().min(m);
    if k == 0 {
        return DMatrix::zeros(m, 0);
    }
    let projector = DMatrix::identity(m, m) - q * q.transpose();
    let eig = projector.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut out = DMatrix::zeros(m, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Columns of `m` at the indices where `s` exceeds `cut`.
fn columns_above(m: &DMatrix<f64>, s: &[f64], cut: f64) -> DMatrix<f64> {
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > cut).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| m[(r, keep[c])])
}

fn cutoff(s: &[f64], rtol: f64) -> f64 {
    rtol * s.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// Singular values of `a` in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let (_, mut s, _) = thin_svd(a);
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rtol · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        None => 0,
        Some(0.0) => 0,
        Some(&top) => s.iter().filter(|&&x| x > rtol * top).count(),
    }
}

/// Orthonormal basis (as columns) of the null space of `a`: the complement
/// of its numerical row space.
pub fn null_space(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let (_, s, v) = thin_svd(a);
    complement(&columns_above(&v, &s, cutoff(&s, rtol)), cols)
}

/// Unit vector spanning the orthogonal complement of the columns of a tall
/// `(m+1) × m` matrix of full column rank.
pub fn left_null_vector(a: &DMatrix<f64>) -> DVector<f64> {
    debug_assert_eq!(a.nrows(), a.ncols() + 1);
    let span = orthonormal_span(a, RANK_RTOL);
    complement(&span, a.nrows()).column(0).into_owned()
}

/// Orthonormal basis for the column span of `a`.
pub fn orthonormal_span(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let (u, s, _) = thin_svd(a);
    columns_above(&u, &s, cutoff(&s, rtol))
}

/// Minimum-norm least-squares solution of `a x = b`, with the residual norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (u, s, v) = thin_svd(a);
    let cut = cutoff(&s, 1e-14);
    let coeffs = u.transpose() * b;
    let mut x = DVector::zeros(a.ncols());
    for (i, &si) in s.iter().enumerate() {
        if si > cut {
            x += v.column(i) * (coeffs[i] / si);
        }
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal dimension.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    let s = singular_values(&residual);
    s.first().copied().unwrap_or(0.0).clamp(0.0, 1.0).asin()
}

/// Largest size expanded by cofactors rather than eliminated.
const LAPLACE_MAX: usize = 5;

/// Determinant. Small matrices use cofactor expansion, a polynomial in the
/// entries, so the derivative parts of jets stay exact even where the value
/// vanishes. Larger ones use Gaussian elimination with partial pivoting on the
/// constant parts. Rows are consumed.
pub fn generic_det<T: Real>(m: Vec<Vec<T>>) -> T {
    if m.len() <= LAPLACE_MAX {
        laplace_det(&m)
    } else {
        eliminate_det(m)
    }
}

fn laplace_det<T: Real>(m: &[Vec<T>]) -> T {
    let n = m.len();
    match n {
        0 => T::cst(1.0),
        1 => m[0][0].clone(),
        2 => m[0][0].clone() * m[1][1].clone() - m[0][1].clone() * m[1][0].clone(),
        _ => (0..n).fold(T::zero(), |acc, c| {
            let minor: Vec<Vec<T>> = m[1..]
                .iter()
                .map(|row| row.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, x)| x.clone()).collect())
                .collect();
            let term = m[0][c].clone() * laplace_det(&minor);
            if c % 2 == 0 {
                acc + term
            } else {
                acc - term
            }
        }),
    }
}

fn eliminate_det<T: Real>(mut m: Vec<Vec<T>>) -> T {
    let n = m.len();
    let mut det = T::cst(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].value().abs().total_cmp(&m[j][col].value().abs()))
            .unwrap();
        if m[pivot][col].value() == 0.0 {
            return T::zero();
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        let p = m[col][col].clone();
        det = det * p.clone();
        for row in col + 1..n {
            let factor = m[row][col].clone() / p.clone();
            for k in col..n {
                let t = m[row][k].clone() - factor.clone() * m[col][k].clone();
                m[row][k] = t;
            }
        }
    }
    det
}

/// Solve the square system `m x = rhs` by Gaussian elimination.
pub fn generic_solve<T: Real>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Vec<T> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].value().abs().total_cmp(&m[j][col].value().abs()))
            .unwrap();
        m.swap(pivot, col);
        rhs.swap(pivot, col);
        let p = m[col][col].clone();
        for row in col + 1..n {
            let factor = m[row][col].clone() / p.clone();
            for k in col..n {
                let t = m[row][k].clone() - factor.clone() * m[col][k].clone();
                m[row][k] = t;
            }
            let t = rhs[row].clone() - factor * rhs[col].clone();
            rhs[row] = t;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for k in row + 1..n {
            acc = acc - m[row][k].clone() * x[k].clone();
        }
        x[row] = acc / m[row][row].clone();
    }
    x
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Least-squares coordinates `w` with `Σ_j w_j cols[j] ≈ y`, via the normal
/// equations (the columns are an immersion's tangent frame, well conditioned
/// on the charts used here).
pub fn generic_tangent_coordinates<T: Real>(cols: &[Vec<T>], y: &[T]) -> Vec<T> {
    let n = cols.len();
    let gram: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&cols[i], &cols[j])).collect())
        .collect();
    let rhs: Vec<T> = cols.iter().map(|c| dot(c, y)).collect();
    generic_solve(gram, rhs)
}

/// Oriented unit normal to the span of `n` vectors in `R^{n+1}`, built from
/// signed maximal minors so that `det[cols | ν] > 0`.
pub fn generic_cofactor_normal<T: Real>(cols: &[Vec<T>]) -> Vec<T> {
    let n = cols.len();
    let dim = n + 1;
    let mut normal = Vec::with_capacity(dim);
    for k in 0..dim {
        let minor: Vec<Vec<T>> = (0..dim)
            .filter(|&r| r != k)
            .map(|r| cols.iter().map(|c| c[r].clone()).collect())
            .collect();
        let d = if n == 0 { T::cst(1.0) } else { generic_det(minor) };
        // cofactor of entry (k, last column)
        let sign = if (k + n).is_multiple_of(2) { 1.0 } else { -1.0 };
        normal.push(d.scale(sign));
    }
    let len = dot(&normal, &normal).sqrt();
    normal.into_iter().map(|x| x / len.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    fn assert_svd(a: &DMatrix<f64>) {
        let (u, s, v) = thin_svd(a);
        let k = a.nrows().min(a.ncols());
        assert_eq!((u.ncols(), s.len(), v.ncols()), (k, k, k));
        let rebuilt = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
        let scale = 1.0 + a.amax();
        assert!((rebuilt - a).amax() < 1e-13 * scale, "reconstruction of {a}");
        assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-13);
        assert!((v.transpose() * &v - DMatrix::identity(k, k)).amax() < 1e-13);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_on_matrices_that_broke_library_routines() {
        // nalgebra: wrong factors (error 0.35).
        let anchor = DMatrix::from_column_slice(
            2,
            5,
            &[
                -0.19619953061839887,
                -2.389465098809283,
                -0.9976890225750032,
                -0.20402866009324364,
                0.13839251781362236,
                -0.7737508853418622,
                -0.19807814737753068,
                0.31084630158426096,
                0.3350323472351801,
                -1.5034843552214112,
            ],
        );
        // faer: no convergence (paired singular values).
        let paired = DMatrix::from_column_slice(
            6,
            6,
            &[
                1.0, 0.0, 0.0, 1.3860300203809408, 0.7000312294268953, -0.0, 0.0, 1.0, 0.0,
                -0.22359219212929918, -0.0, 0.7000312294268953, 0.0, 0.0, 1.0, -0.0, -0.22359219212929918,
                -1.3860300203809408, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
                0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        for m in [&anchor, &anchor.transpose(), &paired, &paired.transpose()] {
            assert_svd(m);
        }
        let (_, s, _) = thin_svd(&anchor);
        let eig = (&anchor * anchor.transpose()).symmetric_eigen();
        let mut expected: Vec<f64> = eig.eigenvalues.iter().map(|x| x.sqrt()).collect();
        expected.sort_by(|x, y| y.total_cmp(x));
        assert!((s[0] - expected[0]).abs() < 1e-13 && (s[1] - expected[1]).abs() < 1e-13);
    }

    #[test]
    fn svd_of_rank_deficient_and_degenerate_shapes() {
        let planar = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_svd(&planar);
        assert_svd(&DMatrix::zeros(4, 2));
        assert_svd(&DMatrix::identity(5, 5));
        let rank_one = DVector::from_vec(vec![1.0, 2.0, 3.0]) * DVector::from_vec(vec![1.0, -1.0]).transpose();
        assert_svd(&rank_one);
        assert_eq!(numerical_rank(&rank_one, 1e-12), 1);
    }

    #[test]
    fn wide_least_squares_on_torus_anchor() {
        // Anchor matrix at a torus point where padding with zero rows made
        // nalgebra's SVD miss the preimage by 1e-2.
        let a = DMatrix::from_row_slice(
            2,
            5,
            &[
                -1.0000000000000004,
                -0.19026124109606962,
                0.16854751859712805,
                0.4105948810269936,
                -0.01645038708884847,
                -1.9984014443252818e-15,
                0.15171242190332085,
                2.3241695722286995,
                -0.8953396996297374,
                -0.28898267897658025,
            ],
        );
        for j in 0..2 {
            let b = DVector::from_fn(2, |i, _| if i == j { 1.0 } else { 0.0 });
            let (x, miss) = least_squares(&a, &b);
            assert!(miss < 1e-14);
            // minimum norm: orthogonal to the null space
            assert!((null_space(&a, 1e-12).transpose() * &x).amax() < 1e-14);
        }
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 3);
        assert!((&a * &ns).amax() < 1e-14);
        assert!((ns.transpose() * &ns - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn jet_det_keeps_derivatives_at_singular_values() {
        // det [[u, 1], [0, 1]] = u vanishes at u = 0 but has derivative 1.
        let u = Jet::seed(&[0.0], 1).remove(0);
        let one = Jet::constant(1.0);
        let det = generic_det(vec![vec![u.clone(), one.clone()], vec![Jet::constant(0.0), one]]);
        assert_eq!(det.value(), 0.0);
        assert_eq!(det.partial(0), 1.0);
        let m: Vec<Vec<Jet>> = (0..3)
            .map(|r| (0..3).map(|c| if r == c { u.clone() } else { Jet::constant(0.0) }).collect())
            .collect();
        assert_eq!(generic_det(m).value(), 0.0);
    }

    #[test]
    fn null_space_of_wide_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((a * &ns).norm() < 1e-14);
        assert!((ns.transpose() * &ns - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn cofactor_normal_is_oriented() {
        let c0 = vec![1.0, 0.0, 0.0];
        let c1 = vec![0.0, 1.0, 0.0];
        let nu = generic_cofactor_normal(&[c0, c1]);
        assert!((nu[2] - 1.0).abs() < 1e-15);
        let c0 = vec![1.0, 0.0];
        let nu = generic_cofactor_normal(&[c0]);
        // det[[1, a], [0, b]] = b > 0
        assert!((nu[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let t: f64 = 1e-9;
        let b = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        let angle = largest_principal_angle(&a, &b);
        assert!((angle - t).abs() < 1e-20);
    }

    #[test]
    fn generic_solve_matches_direct() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = generic_solve(m, vec![3.0, 5.0]);
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }
}
