//! The logarithmic derivative `ω: A → g` of an embedding, its morphism
//! equation, Ad-equivariance under rigid motions, and a checker for the four
//! conditions under which an algebroid with such a map is realised by an
//! immersed hypersurface.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebroid::{
    self, random_section, section_bracket, AlgebroidFibre, DerivativeMode, ResidualConfig, Section, FIBRE_RANK_RTOL,
};
use crate::error::{GeometryError, Result};
use crate::hypersurface::HypersurfacePatch;
use crate::killing::{
    self, adjoint_pushforward, algebra_dim, common_zero, killing_bracket, killing_eval, transverse_to_radical,
    KillingField, RigidMotion, Subspace,
};
use crate::linalg;
use crate::report::ResidualStat;
use crate::sampling;

/// Injectivity threshold on the smallest singular value of the fibre basis.
pub const INJECTIVITY_THRESHOLD: f64 = 1e-10;
/// Tolerance for `|m₀ − f(u₀)|`.
pub const BASE_POINT_TOLERANCE: f64 = 1e-8;

/// `ω(a)`: the Killing field with canonical coefficients `a`.
pub fn omega(fibre: &AlgebroidFibre, a: &DVector<f64>) -> Result<KillingField> {
    let dim = algebra_dim(fibre.ambient_dim());
    if a.len() != dim {
        return Err(GeometryError::DimensionMismatch { expected: dim, got: a.len() });
    }
    KillingField::from_coefficients(a)
}

/// `ω` applied to fibre coordinates (coefficients in the orthonormal fibre basis).
pub fn omega_of_coordinates(fibre: &AlgebroidFibre, coords: &DVector<f64>) -> Result<KillingField> {
    if coords.len() != fibre.rank() {
        return Err(GeometryError::DimensionMismatch {
            expected: fibre.rank(),
            got: coords.len(),
        });
    }
    KillingField::from_coefficients(&fibre.element(coords))
}

/// Smallest singular value of the map from fibre coordinates into `g`.
pub fn injectivity_bound(fibre: &AlgebroidFibre) -> f64 {
    linalg::singular_values(fibre.basis()).last().copied().unwrap_or(0.0)
}

/// `ω̄(X)(u)` as a Killing field.
fn field_of(section: &Section, u: &[f64]) -> Result<KillingField> {
    KillingField::from_coefficients(&section.value(u)?)
}

/// Derivative of `ω̄(X)` along the chart vector `w`, as a Killing field.
fn field_derivative(section: &Section, u: &[f64], w: &DVector<f64>, mode: DerivativeMode) -> Result<KillingField> {
    match mode {
        DerivativeMode::Analytic => {
            let jets = section.taylor(u, 1)?.ok_or_else(|| {
                GeometryError::InvalidParameter("analytic mode needs jets for the patch and sections".into())
            })?;
            let c = DVector::from_iterator(
                jets.len(),
                jets.iter().map(|j| (0..w.len()).map(|i| j.partial(i) * w[i]).sum::<f64>()),
            );
            KillingField::from_coefficients(&c)
        }
        DerivativeMode::FiniteDifference { step } => {
            let len = w.norm();
            let ambient = section.patch().ambient_dim();
            if len == 0.0 {
                return Ok(KillingField::zero(ambient));
            }
            let shifted = |sign: f64| -> Vec<f64> { u.iter().zip(w.iter()).map(|(a, b)| a + sign * step * b / len).collect() };
            let plus = field_of(section, &shifted(1.0))?;
            let minus = field_of(section, &shifted(-1.0))?;
            Ok(plus.sub(&minus).scale(len / (2.0 * step)))
        }
    }
}

/// Norm of `ω̄([X,Y]) − (∇_{#X}ω̄(Y) − ∇_{#Y}ω̄(X) + {ω̄(X), ω̄(Y)})` at `u`.
///
/// The left side goes through the algebroid bracket on coefficient vectors;
/// the right side works with Killing fields as matrices, anchors through the
/// fibre, and brackets with [`killing_bracket`].
pub fn morphism_residual(
    patch: &HypersurfacePatch,
    x: &Section,
    y: &Section,
    u: &[f64],
    mode: DerivativeMode,
) -> Result<f64> {
    let bracket = section_bracket(x, y, u, mode)?;
    let fibre = algebroid::fibre(patch, u)?;
    let left = omega(&fibre, &bracket.value)?;

    if let DerivativeMode::FiniteDifference { step } = mode {
        algebroid::check_margin(patch, u, step)?;
    }
    let fx = field_of(x, u)?;
    let fy = field_of(y, u)?;
    let wx = algebroid::anchor(&fibre, &fibre.project(&fx.coefficients()))?;
    let wy = algebroid::anchor(&fibre, &fibre.project(&fy.coefficients()))?;
    let right = field_derivative(y, u, &wx, mode)?
        .sub(&field_derivative(x, u, &wy, mode)?)
        .add(&killing_bracket(&fx, &fy)?);
    Ok(left.sub(&right).norm())
}

/// [`morphism_residual`] over `samples` random `(X, Y, u)`, summarized with
/// the `"morphism"` tolerance of `config`. Failed evaluations count as NaN.
pub fn morphism_residuals(patch: &HypersurfacePatch, samples: usize, config: &ResidualConfig) -> ResidualStat {
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
            let u = sampling::random_chart_point(&mut rng, patch.chart(), config.margin_fraction);
            let x = random_section(patch, rng.random());
            let y = random_section(patch, rng.random());
            morphism_residual(patch, &x, &y, &u, config.mode).unwrap_or(f64::NAN)
        })
        .collect();
    ResidualStat::from_values(&values, config.tolerance_for("morphism"))
}

/// Settings for [`check_bonnet_conditions_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonnetCheckConfig {
    /// Random chart points checked in addition to `u₀`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for BonnetCheckConfig {
    fn default() -> Self {
        BonnetCheckConfig { samples: 25, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEvidence {
    pub expected: usize,
    pub min: usize,
    pub max: usize,
    /// Relative singular-value threshold.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectivityEvidence {
    pub min_singular_value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransversalityEvidence {
    pub kernel_dim: usize,
    pub defect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasePointEvidence {
    pub m0: Option<Vec<f64>>,
    pub f_u0: Vec<f64>,
    /// Least-squares residual of the common-zero system.
    pub residual: Option<f64>,
    /// `|m₀ − f(u₀)|`.
    pub distance: Option<f64>,
    /// `max_i ‖W_i(m₀)‖` over the basis of `ω(h_{x₀})`.
    pub max_field_at_m0: Option<f64>,
    pub tolerance: f64,
}

/// Outcome of the four-condition check, with the numbers behind each verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonnetConditionReport {
    pub n: usize,
    pub u0: Vec<f64>,
    pub points: usize,
    pub rank_ok: bool,
    pub transitive_ok: bool,
    pub injective_ok: bool,
    pub transverse_ok: bool,
    pub m0_ok: bool,
    pub rank: RankEvidence,
    pub transitivity: RankEvidence,
    pub injectivity: InjectivityEvidence,
    pub transversality: TransversalityEvidence,
    pub base_point: BasePointEvidence,
    /// Numerical errors met while checking; any entry fails the report.
    pub failures: Vec<String>,
}

impl BonnetConditionReport {
    pub fn all_pass(&self) -> bool {
        self.rank_ok && self.transitive_ok && self.injective_ok && self.transverse_ok && self.m0_ok && self.failures.is_empty()
    }

    pub fn conditions_passed(&self) -> usize {
        [self.rank_ok, self.transitive_ok, self.injective_ok, self.transverse_ok]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

/// Check the rank, transitivity, injectivity and transversality conditions at
/// `u₀` plus 25 random chart points, and recover `m₀`.
pub fn check_bonnet_conditions(patch: &HypersurfacePatch, u0: &[f64]) -> BonnetConditionReport {
    check_bonnet_conditions_with(patch, u0, &BonnetCheckConfig::default())
}

pub fn check_bonnet_conditions_with(
    patch: &HypersurfacePatch,
    u0: &[f64],
    config: &BonnetCheckConfig,
) -> BonnetConditionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut points = vec![u0.to_vec()];
    points.extend((0..config.samples).map(|_| sampling::random_chart_point(&mut rng, patch.chart(), 0.0)));
    let fibres: Vec<Result<AlgebroidFibre>> = points.par_iter().map(|u| algebroid::fibre(patch, u)).collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (u, f) in points.iter().zip(fibres) {
        match f {
            Ok(f) => ok.push(f),
            Err(e) => failures.push(format!("at u = {u:?}: {e}")),
        }
    }
    let base_ok = ok.first().is_some_and(|f| f.u() == u0);
    let mut report = if base_ok {
        evaluate_conditions(patch.dim(), &ok)
    } else {
        failures.push("fibre at u0 unavailable".to_string());
        empty_report(patch.dim(), u0, ok.len())
    };
    report.failures.extend(failures);
    report
}

fn empty_report(n: usize, u0: &[f64], points: usize) -> BonnetConditionReport {
    let rank = RankEvidence {
        expected: n * (n + 3) / 2,
        min: 0,
        max: 0,
        threshold: FIBRE_RANK_RTOL,
    };
    BonnetConditionReport {
        n,
        u0: u0.to_vec(),
        points,
        rank_ok: false,
        transitive_ok: false,
        injective_ok: false,
        transverse_ok: false,
        m0_ok: false,
        rank,
        transitivity: RankEvidence {
            expected: n,
            min: 0,
            max: 0,
            threshold: FIBRE_RANK_RTOL,
        },
        injectivity: InjectivityEvidence {
            min_singular_value: 0.0,
            threshold: INJECTIVITY_THRESHOLD,
        },
        transversality: TransversalityEvidence {
            kernel_dim: 0,
            defect: 0,
        },
        base_point: BasePointEvidence {
            m0: None,
            f_u0: Vec::new(),
            residual: None,
            distance: None,
            max_field_at_m0: None,
            tolerance: BASE_POINT_TOLERANCE,
        },
        failures: Vec::new(),
    }
}

/// Evaluate the conditions on already-built fibres; `fibres[0]` is the base
/// fibre at `u₀`.
pub fn evaluate_conditions(n: usize, fibres: &[AlgebroidFibre]) -> BonnetConditionReport {
    let base = &fibres[0];
    let mut report = empty_report(n, base.u(), fibres.len());

    let ranks: Vec<usize> = fibres.iter().map(AlgebroidFibre::numerical_rank).collect();
    report.rank.min = ranks.iter().copied().min().unwrap_or(0);
    report.rank.max = ranks.iter().copied().max().unwrap_or(0);
    report.rank_ok = ranks.iter().all(|&r| r == report.rank.expected);

    let anchors: Vec<usize> = fibres
        .iter()
        .map(|f| linalg::numerical_rank(f.anchor_matrix(), FIBRE_RANK_RTOL))
        .collect();
    report.transitivity.min = anchors.iter().copied().min().unwrap_or(0);
    report.transitivity.max = anchors.iter().copied().max().unwrap_or(0);
    report.transitive_ok = anchors.iter().all(|&r| r == n);

    let smallest = fibres.iter().map(injectivity_bound).fold(f64::INFINITY, f64::min);
    report.injectivity.min_singular_value = smallest;
    report.injective_ok = smallest > INJECTIVITY_THRESHOLD;

    let d = base.ambient_dim();
    report.transversality.kernel_dim = base.kernel_dim();
    report.base_point.f_u0 = base.point().iter().copied().collect();
    match Subspace::from_coefficient_columns(d, base.kernel_basis()) {
        Ok(w) => {
            let t = transverse_to_radical(&w);
            report.transversality.defect = t.defect;
            report.transverse_ok = t.transverse;
            match common_zero(&w) {
                Ok(cz) => {
                    let distance = (&cz.point - base.point()).norm();
                    let max_field = w
                        .basis()
                        .iter()
                        .map(|b| killing_eval(b, &cz.point).map(|v| v.norm()).unwrap_or(f64::INFINITY))
                        .fold(0.0, f64::max);
                    report.m0_ok = distance < BASE_POINT_TOLERANCE && max_field < BASE_POINT_TOLERANCE;
                    report.base_point.m0 = Some(cz.point.iter().copied().collect());
                    report.base_point.residual = Some(cz.residual);
                    report.base_point.distance = Some(distance);
                    report.base_point.max_field_at_m0 = Some(max_field);
                }
                Err(e) => report.failures.push(format!("m0 recovery: {e}")),
            }
        }
        Err(e) => report.failures.push(format!("kernel subspace: {e}")),
    }
    report
}

/// Matrix of `Ad_φ` on canonical coefficients.
pub fn adjoint_matrix(phi: &RigidMotion) -> DMatrix<f64> {
    let d = phi.ambient_dim();
    let basis = killing::canonical_basis(d - 1);
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for (k, b) in basis.iter().enumerate() {
        let pushed = adjoint_pushforward(phi, b).expect("matching dimensions");
        m.set_column(k, &pushed.coefficients());
    }
    m
}

/// Largest principal angle between `Ad_φ(A|_x)` and the fibre of the moved
/// patch `φ ∘ f` at the same chart point.
pub fn ad_equivariance_residual(patch: &HypersurfacePatch, phi: &RigidMotion, u: &[f64]) -> Result<f64> {
    let original = algebroid::fibre(patch, u)?;
    let moved = algebroid::fibre(&patch.moved(phi)?, u)?;
    let pushed = linalg::orthonormal_span(&(adjoint_matrix(phi) * original.basis()), FIBRE_RANK_RTOL);
    if pushed.ncols() != moved.rank() {
        return Err(GeometryError::DegenerateSystem {
            rank: pushed.ncols(),
            needed: moved.rank(),
        });
    }
    Ok(linalg::largest_principal_angle(&pushed, moved.basis()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::random_section;
    use crate::hypersurface::preset_named;

    #[test]
    fn omega_of_kernel_vanishes_at_base_point() {
        let p = preset_named("sphere", 2).unwrap();
        let f = algebroid::fibre(&p, &[1.0, 0.3]).unwrap();
        for c in f.kernel_basis().column_iter() {
            let x = omega(&f, &c.into_owned()).unwrap();
            assert!(killing_eval(&x, f.point()).unwrap().norm() < 1e-10);
        }
        assert!((injectivity_bound(&f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn omega_reproduces_anchor() {
        let p = preset_named("graph", 2).unwrap();
        let f = algebroid::fibre(&p, &[0.2, -0.4]).unwrap();
        for k in 0..f.rank() {
            let coords = DVector::from_fn(f.rank(), |i, _| if i == k { 1.0 } else { 0.0 });
            let x = omega_of_coordinates(&f, &coords).unwrap();
            let w = algebroid::anchor(&f, &f.element(&coords)).unwrap();
            assert!((killing_eval(&x, f.point()).unwrap() - f.jacobian() * w).norm() < 1e-10);
        }
    }

    #[test]
    fn morphism_residual_small_and_symmetric() {
        let p = preset_named("sphere", 2).unwrap();
        let x = random_section(&p, 1);
        let y = random_section(&p, 2);
        let u = [1.1, 0.4];
        let a = morphism_residual(&p, &x, &y, &u, DerivativeMode::Analytic).unwrap();
        let b = morphism_residual(&p, &y, &x, &u, DerivativeMode::Analytic).unwrap();
        assert!(a < 1e-10 && (a - b).abs() < 1e-10);
        assert!(morphism_residual(&p, &x, &y, &u, DerivativeMode::finite_difference()).unwrap() < 1e-6);
    }

    #[test]
    fn conditions_hold_on_presets() {
        for name in ["sphere", "cylinder", "graph"] {
            let p = preset_named(name, 2).unwrap();
            let r = check_bonnet_conditions(&p, &p.chart().center());
            assert!(r.all_pass(), "{name}: {r:?}");
            assert_eq!(r.conditions_passed(), 4);
            assert!(r.base_point.distance.unwrap() < 1e-8);
        }
    }

    #[test]
    fn truncated_fibre_fails_rank() {
        let p = preset_named("sphere", 2).unwrap();
        let f = algebroid::fibre(&p, &p.chart().center()).unwrap();
        let r = evaluate_conditions(2, &[f.truncated(2)]);
        assert!(!r.rank_ok);
        assert_eq!(r.rank.min, 4);
    }

    #[test]
    fn ad_equivariance() {
        let p = preset_named("sphere", 2).unwrap();
        let id = RigidMotion::identity(3);
        assert!(ad_equivariance_residual(&p, &id, &[1.0, 0.5]).unwrap() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = sampling::random_rigid_motion(&mut rng, 3);
        assert!(ad_equivariance_residual(&p, &phi, &[1.0, 0.5]).unwrap() < 1e-8);
    }
}
