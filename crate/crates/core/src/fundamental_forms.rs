//! First and second fundamental forms recovered from the logarithmic
//! derivative: the inclusion `ι` read off `A|_x / h|_x ≅ rad g`, the Gauss map
//! orthogonal to its image, and the tensors `g_ω = ιᵀι`, `II_ω = −⟨ι·, dν_ω(·)⟩`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::{self, AlgebroidFibre, DerivativeMode};
use crate::bonnet::{FieldGrid, TensorFieldPair};
use crate::error::{GeometryError, Result};
use crate::hypersurface::{orient_normal, HypersurfacePatch};
use crate::jet::{Jet, Real};
use crate::killing::{self, algebra_dim, skew_pairs};
use crate::linalg;
use crate::report::{ResidualReport, ResidualStat};
use crate::sampling;

/// Largest disagreement between two anchor preimages, relative to `1 + |w|`.
pub const CHOICE_TOL: f64 = 1e-10;
/// Tolerance of the comparison with the classical forms.
pub const COMPARISON_TOL: f64 = 1e-6;
/// Asymmetry allowed in `II_ω` with exact derivatives.
pub const ASYMMETRY_TOL_ANALYTIC: f64 = 1e-6;
/// Asymmetry allowed in `II_ω` with difference quotients.
pub const ASYMMETRY_TOL_FD: f64 = 1e-4;

/// The ω-derived forms at one chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaForms {
    pub u: Vec<f64>,
    /// `(n+1) × n`: `ι e_j` in the columns.
    pub iota_matrix: DMatrix<f64>,
    pub nu_omega: DVector<f64>,
    pub g_omega: DMatrix<f64>,
    /// Symmetrized; the raw asymmetry is in `asymmetry`.
    pub ii_omega: DMatrix<f64>,
    pub asymmetry: f64,
}

#[derive(Serialize)]
struct OmegaFormsJson<'a> {
    u: &'a [f64],
    iota: Vec<f64>,
    nu: &'a [f64],
    g: Vec<f64>,
    ii: Vec<f64>,
    asymmetry: f64,
}

impl Serialize for OmegaForms {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OmegaFormsJson {
            u: &self.u,
            iota: row_major(&self.iota_matrix),
            nu: self.nu_omega.as_slice(),
            g: row_major(&self.g_omega),
            ii: row_major(&self.ii_omega),
            asymmetry: self.asymmetry,
        }
        .serialize(s)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Canonical coefficients of the translations, `dim g × (n+1)`.
fn radical_matrix(ambient: usize) -> DMatrix<f64> {
    let offset = skew_pairs(ambient).len();
    DMatrix::from_fn(algebra_dim(ambient), ambient, |r, c| if r == offset + c { 1.0 } else { 0.0 })
}

/// The `w ∈ rad g` with `a − w` vanishing at `x`, by solving
/// `[isotropy | rad] z = a`.
fn radical_part(fibre: &AlgebroidFibre, a: &DVector<f64>) -> Result<DVector<f64>> {
    let d = fibre.ambient_dim();
    let isotropy = killing::isotropy_basis(fibre.point()).coefficient_matrix();
    let k = isotropy.ncols();
    let mut system = DMatrix::zeros(algebra_dim(d), k + d);
    system.view_mut((0, 0), (algebra_dim(d), k)).copy_from(&isotropy);
    system.view_mut((0, k), (algebra_dim(d), d)).copy_from(&radical_matrix(d));
    let (z, residual) = linalg::least_squares(&system, a);
    if residual > CHOICE_TOL * (1.0 + a.norm()) {
        return Err(GeometryError::ChoiceDependent { discrepancy: residual });
    }
    Ok(z.rows(k, d).into_owned())
}

/// `ι` on a fibre: for each chart direction `e_j` take the minimum-norm anchor
/// preimage, then a second one shifted along the anchor kernel, and require
/// both to give the same radical part.
pub fn iota_of(fibre: &AlgebroidFibre) -> Result<DMatrix<f64>> {
    let n = fibre.intrinsic_dim();
    let d = fibre.ambient_dim();
    let shift = fibre.kernel_basis() * DVector::from_fn(fibre.kernel_dim(), |i, _| 1.0 + i as f64);
    let mut iota = DMatrix::zeros(d, n);
    for j in 0..n {
        let target = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        let (coords, miss) = linalg::least_squares(fibre.anchor_matrix(), &target);
        if miss > CHOICE_TOL.sqrt() {
            return Err(GeometryError::InvalidParameter(format!(
                "anchor is not onto at {:?} (miss {miss:e})",
                fibre.u()
            )));
        }
        let a = fibre.element(&coords);
        let w = radical_part(fibre, &a)?;
        let other = radical_part(fibre, &(&a + &shift))?;
        let discrepancy = (&w - &other).norm();
        if discrepancy > CHOICE_TOL * (1.0 + w.norm()) {
            return Err(GeometryError::ChoiceDependent { discrepancy });
        }
        iota.set_column(j, &w);
    }
    Ok(iota)
}

/// `ι` at a chart point, `(n+1) × n`.
pub fn iota(patch: &HypersurfacePatch, u: &[f64]) -> Result<DMatrix<f64>> {
    iota_of(&algebroid::fibre(patch, u)?)
}

/// Unit vector orthogonal to the image of `ι`, with `det[ι | ν] · orientation > 0`.
pub fn gauss_from_omega(patch: &HypersurfacePatch, u: &[f64]) -> Result<DVector<f64>> {
    let i = iota(patch, u)?;
    Ok(orient_normal(&i, linalg::left_null_vector(&i), patch.orientation()))
}

/// `ι` written with generic scalars: minimum-norm `a` with `ℓ(x)·a = 0` and
/// `#a = e_j`, then `w = X_a(x)`. Used with jets to differentiate `ν_ω`.
fn iota_generic<T: Real>(point: &[T], cols: &[Vec<T>], normal: &[T]) -> Vec<Vec<T>> {
    let d = point.len();
    let n = cols.len();
    let dim = algebra_dim(d);
    let mut rows = vec![killing::tangency_functional(point, normal)];
    rows.extend((0..n).map(|_| Vec::with_capacity(dim)));
    for k in 0..dim {
        let unit: Vec<T> = (0..dim).map(|i| T::cst(if i == k { 1.0 } else { 0.0 })).collect();
        let value = killing::eval_coefficients(d, &unit, point);
        for (i, t) in linalg::generic_tangent_coordinates(cols, &value).into_iter().enumerate() {
            rows[1 + i].push(t);
        }
    }
    let gram: Vec<Vec<T>> = rows.iter().map(|r| rows.iter().map(|s| linalg::dot(r, s)).collect()).collect();
    (0..n)
        .map(|j| {
            let rhs: Vec<T> = (0..=n).map(|i| T::cst(if i == j + 1 { 1.0 } else { 0.0 })).collect();
            let y = linalg::generic_solve(gram.clone(), rhs);
            let a: Vec<T> = (0..dim)
                .map(|k| rows.iter().zip(&y).fold(T::zero(), |acc, (r, yi)| acc + r[k].clone() * yi.clone()))
                .collect();
            killing::eval_coefficients(d, &a, point)
        })
        .collect()
}

/// Exact `∂_j ν_ω` from first-order jets of the generic construction.
fn normal_derivatives_analytic(patch: &HypersurfacePatch, u: &[f64]) -> Result<DMatrix<f64>> {
    let missing = || GeometryError::InvalidParameter("analytic mode needs jets for the patch".into());
    let f = patch.taylor(u, 2).ok_or_else(missing)?;
    let nu = patch.normal_taylor(u, 1).ok_or_else(missing)?;
    let n = patch.dim();
    let cols: Vec<Vec<Jet>> = (0..n).map(|c| f.iter().map(|fk| fk.derivative(c)).collect()).collect();
    let point: Vec<Jet> = f.iter().map(|fk| fk.truncate(1)).collect();
    let image = iota_generic(&point, &cols, &nu);
    let nu_omega: Vec<Jet> = linalg::generic_cofactor_normal(&image)
        .into_iter()
        .map(|x| x.scale(patch.orientation()))
        .collect();
    Ok(DMatrix::from_fn(nu_omega.len(), n, |r, j| nu_omega[r].partial(j)))
}

/// Difference quotients of `ν_ω`: central when the stencil fits, otherwise
/// (if `one_sided`) second-order one-sided.
fn normal_derivatives_fd(patch: &HypersurfacePatch, u: &[f64], step: f64, one_sided: bool) -> Result<DMatrix<f64>> {
    if !one_sided {
        algebroid::check_margin(patch, u, step)?;
    }
    let chart = patch.chart();
    let n = patch.dim();
    let mut out = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        let at = |k: f64| -> Result<DVector<f64>> {
            let mut p = u.to_vec();
            p[j] += k * step;
            gauss_from_omega(patch, &p)
        };
        let (lo, hi, x) = (chart.lower()[j], chart.upper()[j], u[j]);
        let col = if x - step >= lo && x + step <= hi {
            (at(1.0)? - at(-1.0)?) / (2.0 * step)
        } else if x + 2.0 * step <= hi {
            (at(0.0)? * -3.0 + at(1.0)? * 4.0 - at(2.0)?) / (2.0 * step)
        } else if x - 2.0 * step >= lo {
            (at(0.0)? * 3.0 - at(-1.0)? * 4.0 + at(-2.0)?) / (2.0 * step)
        } else {
            return Err(GeometryError::StencilOutOfDomain {
                point: u.to_vec(),
                margin: chart.margin(u),
            });
        };
        out.set_column(j, &col);
    }
    Ok(out)
}

fn forms_with(patch: &HypersurfacePatch, u: &[f64], mode: DerivativeMode, one_sided: bool) -> Result<OmegaForms> {
    let iota_matrix = iota(patch, u)?;
    let nu_omega = orient_normal(&iota_matrix, linalg::left_null_vector(&iota_matrix), patch.orientation());
    let dnu = match mode {
        DerivativeMode::Analytic => normal_derivatives_analytic(patch, u)?,
        DerivativeMode::FiniteDifference { step } => normal_derivatives_fd(patch, u, step, one_sided)?,
    };
    let g_omega = iota_matrix.transpose() * &iota_matrix;
    let raw = -(iota_matrix.transpose() * dnu);
    let asymmetry = (&raw - raw.transpose()).amax();
    let ii_omega = (&raw + raw.transpose()) * 0.5;
    Ok(OmegaForms {
        u: u.to_vec(),
        iota_matrix,
        nu_omega,
        g_omega,
        ii_omega,
        asymmetry,
    })
}

/// `ι`, `ν_ω`, `g_ω` and `II_ω` at `u`. Finite-difference mode needs the
/// central stencil to fit inside the chart.
pub fn omega_forms(patch: &HypersurfacePatch, u: &[f64], mode: DerivativeMode) -> Result<OmegaForms> {
    forms_with(patch, u, mode, false)
}

/// `(g_ω, II_ω)` as a callback field pair; difference stencils fall back to
/// one-sided near the chart boundary.
pub fn omega_fields(patch: &HypersurfacePatch, mode: DerivativeMode) -> TensorFieldPair {
    let p = patch.clone();
    let q = patch.clone();
    TensorFieldPair::from_fns(
        patch.chart().clone(),
        move |u| {
            let forms = forms_with(&p, u, mode, true)?;
            Ok((forms.g_omega, forms.ii_omega))
        },
        move |u| {
            let i = iota(&q, u)?;
            Ok(i.transpose() * i)
        },
    )
}

/// `(g_ω, II_ω)` sampled at every chart node.
pub fn omega_grid(patch: &HypersurfacePatch, mode: DerivativeMode) -> Result<FieldGrid> {
    let chart = patch.chart().clone();
    let forms: Vec<OmegaForms> = (0..chart.node_count())
        .into_par_iter()
        .map(|flat| forms_with(patch, &chart.node(&chart.node_index(flat)), mode, true))
        .collect::<Result<_>>()?;
    let grid = FieldGrid {
        chart,
        g: forms.iter().map(|f| row_major(&f.g_omega)).collect(),
        ii: forms.iter().map(|f| row_major(&f.ii_omega)).collect(),
    };
    grid.validate()?;
    Ok(grid)
}

/// Sampling options for [`compare_with_classical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConfig {
    pub samples: usize,
    pub seed: u64,
    pub mode: DerivativeMode,
    /// Fraction of each chart side kept clear of sample points.
    pub margin_fraction: f64,
    pub tolerance: f64,
    /// Bound on the raw asymmetry of `II_ω`.
    pub asymmetry_tolerance: f64,
}

impl ComparisonConfig {
    /// Analytic derivatives when the patch has jets.
    pub fn for_patch(patch: &HypersurfacePatch, seed: u64) -> Self {
        let analytic = patch.has_jets();
        ComparisonConfig {
            samples: 100,
            seed,
            mode: if analytic {
                DerivativeMode::Analytic
            } else {
                DerivativeMode::finite_difference()
            },
            margin_fraction: 0.02,
            tolerance: COMPARISON_TOL,
            asymmetry_tolerance: if analytic { ASYMMETRY_TOL_ANALYTIC } else { ASYMMETRY_TOL_FD },
        }
    }
}

/// Max-norm gaps between the ω-derived and classical data at random points:
/// `iota` vs `J`, `normal` vs the Gauss map, `metric`, `second_form`, and the
/// raw `asymmetry` of `II_ω`. A failed evaluation is recorded as NaN.
pub fn compare_with_classical(patch: &HypersurfacePatch, config: &ComparisonConfig) -> ResidualReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points: Vec<Vec<f64>> = (0..config.samples)
        .map(|_| sampling::random_chart_point(&mut rng, patch.chart(), config.margin_fraction))
        .collect();
    let rows: Vec<[f64; 5]> = points
        .par_iter()
        .map(|u| {
            let gaps = || -> Result<[f64; 5]> {
                let forms = omega_forms(patch, u, config.mode)?;
                Ok([
                    (&forms.iota_matrix - patch.jacobian(u)?).amax(),
                    (&forms.nu_omega - patch.gauss_map(u)?).amax(),
                    (&forms.g_omega - patch.classical_first_form(u)?).amax(),
                    (&forms.ii_omega - patch.classical_second_form(u)?).amax(),
                    forms.asymmetry,
                ])
            };
            gaps().unwrap_or([f64::NAN; 5])
        })
        .collect();
    let mut report = ResidualReport::default();
    for (k, name) in ["iota", "normal", "metric", "second_form", "asymmetry"].iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let tol = if *name == "asymmetry" { config.asymmetry_tolerance } else { config.tolerance };
        report.insert(*name, ResidualStat::from_values(&values, tol));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersurface::{preset_named, PRESET_NAMES};

    #[test]
    fn plane_is_trivial() {
        let p = preset_named("plane", 2).unwrap();
        let u = [0.3, -0.4];
        let f = omega_forms(&p, &u, DerivativeMode::Analytic).unwrap();
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!((&f.iota_matrix - e).amax() < 1e-12);
        assert!((f.g_omega - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(f.ii_omega.amax() < 1e-12);
        assert!((f.nu_omega.abs() - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn generic_construction_matches_fibre_route() {
        for name in PRESET_NAMES {
            let p = preset_named(name, 2).unwrap();
            let u = p.chart().center();
            let jac = p.jacobian(&u).unwrap();
            let cols: Vec<Vec<f64>> = (0..2).map(|c| jac.column(c).iter().copied().collect()).collect();
            let x = p.position(&u).unwrap();
            let nu = p.gauss_map(&u).unwrap();
            let generic = iota_generic(x.as_slice(), &cols, nu.as_slice());
            let fibre_route = iota(&p, &u).unwrap();
            for (j, col) in generic.iter().enumerate() {
                let col = DVector::from_column_slice(col);
                assert!((col - fibre_route.column(j)).amax() < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn analytic_forms_at_chart_centres() {
        // Centres sit on coordinate planes, where some normal minors vanish.
        for name in PRESET_NAMES {
            for n in 1..=3 {
                let Ok(p) = preset_named(name, n) else { continue };
                let u = p.chart().center();
                let forms = omega_forms(&p, &u, DerivativeMode::Analytic).unwrap();
                let (g, ii) = p.classical_forms(&u).unwrap();
                assert!((&forms.g_omega - g).amax() < 1e-12, "{name} n={n}");
                assert!((&forms.ii_omega - ii).amax() < 1e-12, "{name} n={n}");
            }
        }
    }

    #[test]
    fn sphere_forms() {
        let p = preset_named("sphere", 2).unwrap();
        let u = [1.1, 0.4];
        for mode in [DerivativeMode::Analytic, DerivativeMode::finite_difference()] {
            let f = omega_forms(&p, &u, mode).unwrap();
            let s = u[0].sin();
            let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, s * s]);
            assert!((&f.g_omega - &g).amax() < 1e-9);
            assert!((&f.ii_omega + &g).amax() < 1e-8, "{mode:?} {}", f.ii_omega);
            assert!((&f.nu_omega - p.position(&u).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn strict_stencil_at_boundary() {
        let p = preset_named("sphere", 2).unwrap();
        let u = p.chart().lower().to_vec();
        let err = omega_forms(&p, &u, DerivativeMode::finite_difference());
        assert!(matches!(err, Err(GeometryError::StencilOutOfDomain { .. })));
        assert!(omega_fields(&p, DerivativeMode::finite_difference()).forms(&u).is_ok());
    }

    #[test]
    fn broken_fibre_is_choice_dependent() {
        let p = preset_named("sphere", 2).unwrap();
        let fib = algebroid::fibre(&p, &[1.0, 0.5]).unwrap();
        let offset = skew_pairs(3).len();
        let mut k = fib.kernel_basis().clone();
        k[(offset, 0)] += 1e-3;
        let err = iota_of(&fib.with_kernel_basis(k));
        assert!(matches!(err, Err(GeometryError::ChoiceDependent { .. })), "{err:?}");
    }

    #[test]
    fn kernel_components_do_not_matter() {
        let p = preset_named("torus", 2).unwrap();
        let fib = algebroid::fibre(&p, &[0.7, -1.2]).unwrap();
        let base = iota_of(&fib).unwrap();
        let k = fib.kernel_basis() * 5.0;
        let scaled = iota_of(&fib.with_kernel_basis(k)).unwrap();
        assert!((base - scaled).amax() < 1e-10);
    }
}
