use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::maps::{AlgebraMap, PolynomialMap, ScalarMap, ScaledMap};
use super::{DerivativeMode, MARGIN_STEPS};
use crate::error::{GeometryError, Result};
use crate::hypersurface::HypersurfacePatch;
use crate::jet::{Jet, Real};
use crate::killing::{self, algebra_dim};
use crate::linalg;

/// Orthogonal projection of `c` onto the kernel of the functional `l`.
fn project<T: Real>(l: &[T], c: &[T]) -> Vec<T> {
    let ratio = linalg::dot(l, c) / linalg::dot(l, l);
    c.iter()
        .zip(l)
        .map(|(ci, li)| ci.clone() - li.clone() * ratio.clone())
        .collect()
}

fn jets_to_values(jets: &[Jet]) -> DVector<f64> {
    DVector::from_iterator(jets.len(), jets.iter().map(Real::value))
}

/// A section of `A`: a raw algebra-valued map projected pointwise onto the
/// fibres. The projection is basis independent, hence smooth in `u`.
#[derive(Clone)]
pub struct Section {
    patch: HypersurfacePatch,
    raw: Arc<dyn AlgebraMap>,
}

impl Section {
    pub fn new(patch: &HypersurfacePatch, raw: Arc<dyn AlgebraMap>) -> Result<Self> {
        let dim = algebra_dim(patch.ambient_dim());
        if raw.output_dim() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                got: raw.output_dim(),
            });
        }
        Ok(Section {
            patch: patch.clone(),
            raw,
        })
    }

    /// Section whose raw map is constant.
    pub fn constant(patch: &HypersurfacePatch, value: &DVector<f64>) -> Result<Self> {
        Section::new(patch, Arc::new(PolynomialMap::constant(patch.dim(), value)))
    }

    pub fn patch(&self) -> &HypersurfacePatch {
        &self.patch
    }

    pub fn raw(&self) -> &Arc<dyn AlgebraMap> {
        &self.raw
    }

    fn ambient(&self) -> usize {
        self.patch.ambient_dim()
    }

    pub fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        let x = self.patch.position(u)?;
        let nu = self.patch.gauss_map(u)?;
        let l = killing::tangency_functional(x.as_slice(), nu.as_slice());
        let raw = self.raw.value(u)?;
        Ok(DVector::from_vec(project(&l, raw.as_slice())))
    }

    /// Jets of the projected section; `None` unless both the patch and the
    /// raw map provide jets.
    pub fn taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        let (Some(x), Some(nu)) = (self.patch.taylor(u, order), self.patch.normal_taylor(u, order)) else {
            return Ok(None);
        };
        let Some(raw) = self.raw.taylor(u, order)? else {
            return Ok(None);
        };
        let l = killing::tangency_functional(&x, &nu);
        Ok(Some(project(&l, &raw)))
    }

    pub fn scaled(&self, factor: Arc<dyn ScalarMap>) -> Section {
        Section {
            patch: self.patch.clone(),
            raw: Arc::new(ScaledMap {
                factor,
                inner: self.raw.clone(),
            }),
        }
    }

    /// `[self, other]` as a section in its own right.
    pub fn bracket(&self, other: &Section, mode: DerivativeMode) -> Section {
        Section {
            patch: self.patch.clone(),
            raw: Arc::new(BracketMap {
                x: self.clone(),
                y: other.clone(),
                mode,
            }),
        }
    }

    /// `|⟨X(u)(f(u)), ν(u)⟩|`.
    pub fn tangency_residual(&self, u: &[f64]) -> Result<f64> {
        let value = self.value(u)?;
        tangency_of(&self.patch, u, &value)
    }

    /// `#X` in chart coordinates.
    pub fn anchored(&self, u: &[f64]) -> Result<DVector<f64>> {
        let value = self.value(u)?;
        anchor_value(&self.patch, u, &value)
    }

    /// Jets of `#X` in chart coordinates.
    pub fn anchored_taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        let Some(x) = self.taylor(u, order)? else {
            return Ok(None);
        };
        let Some(f) = self.patch.taylor(u, order + 1) else {
            return Ok(None);
        };
        Ok(Some(anchor_jets(self.ambient(), self.patch.dim(), &f, &x)))
    }
}

fn tangency_of(patch: &HypersurfacePatch, u: &[f64], value: &DVector<f64>) -> Result<f64> {
    let x = patch.position(u)?;
    let nu = patch.gauss_map(u)?;
    let field = killing::evaluation_matrix(&x) * value;
    Ok(field.dot(&nu).abs())
}

fn anchor_value(patch: &HypersurfacePatch, u: &[f64], value: &DVector<f64>) -> Result<DVector<f64>> {
    let x = patch.position(u)?;
    let field = killing::evaluation_matrix(&x) * value;
    Ok(patch.tangent_coordinates(u, &field)?.0)
}

/// `w` with `J w = X(f)` as jets; `f` must be one order above `x`.
fn anchor_jets(ambient: usize, n: usize, f: &[Jet], x: &[Jet]) -> Vec<Jet> {
    let cols: Vec<Vec<Jet>> = (0..n)
        .map(|c| f.iter().map(|fk| fk.derivative(c)).collect())
        .collect();
    let value = killing::eval_coefficients(ambient, x, f);
    linalg::generic_tangent_coordinates(&cols, &value)
}

pub(crate) fn check_margin(patch: &HypersurfacePatch, u: &[f64], step: f64) -> Result<()> {
    let margin = patch.chart().margin(u);
    if margin < MARGIN_STEPS * step {
        return Err(GeometryError::StencilOutOfDomain {
            point: u.to_vec(),
            margin,
        });
    }
    Ok(())
}

/// Central difference of `g` along the chart vector `w`, scaled by `|w|`.
pub(crate) fn directional<F>(g: F, u: &[f64], w: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let len = w.norm();
    if len == 0.0 {
        let probe = g(u)?;
        return Ok(DVector::zeros(probe.len()));
    }
    let at = |sign: f64| -> Vec<f64> {
        u.iter()
            .zip(w.iter())
            .map(|(ui, wi)| ui + sign * step * wi / len)
            .collect()
    };
    let plus = g(&at(1.0))?;
    let minus = g(&at(-1.0))?;
    Ok((plus - minus) * (len / (2.0 * step)))
}

/// Value of `[X, Y]` at a point with its distance from `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketValue {
    pub value: DVector<f64>,
    /// `|⟨[X,Y](x), ν⟩|`; zero exactly when the bracket lies in `A|_x`.
    pub tangency_residual: f64,
}

/// `[X, Y] = ∇_{#X} Y − ∇_{#Y} X + {X, Y}` at `u`.
pub fn section_bracket(x: &Section, y: &Section, u: &[f64], mode: DerivativeMode) -> Result<BracketValue> {
    let value = match mode {
        DerivativeMode::Analytic => {
            let jets = bracket_taylor(x, y, u, 0)?.ok_or_else(|| {
                GeometryError::InvalidParameter("analytic mode needs jets for the patch and sections".into())
            })?;
            jets_to_values(&jets)
        }
        DerivativeMode::FiniteDifference { step } => {
            check_margin(x.patch(), u, step)?;
            let xv = x.value(u)?;
            let yv = y.value(u)?;
            let wx = anchor_value(x.patch(), u, &xv)?;
            let wy = anchor_value(x.patch(), u, &yv)?;
            let dy = directional(|p| y.value(p), u, &wx, step)?;
            let dx = directional(|p| x.value(p), u, &wy, step)?;
            let algebraic = killing::bracket_coefficients(x.ambient(), xv.as_slice(), yv.as_slice());
            dy - dx + DVector::from_vec(algebraic)
        }
    };
    let tangency_residual = tangency_of(x.patch(), u, &value)?;
    Ok(BracketValue {
        value,
        tangency_residual,
    })
}

/// Jets of `[X, Y]` of the given order, from jets of `X`, `Y` one order higher.
fn bracket_taylor(x: &Section, y: &Section, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
    let (Some(xs), Some(ys)) = (x.taylor(u, order + 1)?, y.taylor(u, order + 1)?) else {
        return Ok(None);
    };
    let Some(f) = x.patch().taylor(u, order + 1) else {
        return Ok(None);
    };
    let n = x.patch().dim();
    let ambient = x.ambient();
    let xs_low: Vec<Jet> = xs.iter().map(|j| j.truncate(order)).collect();
    let ys_low: Vec<Jet> = ys.iter().map(|j| j.truncate(order)).collect();
    let wx = anchor_jets(ambient, n, &f, &xs_low);
    let wy = anchor_jets(ambient, n, &f, &ys_low);
    let algebraic = killing::bracket_coefficients(ambient, &xs_low, &ys_low);
    let out = (0..xs.len())
        .map(|k| {
            let mut acc = algebraic[k].clone();
            for j in 0..n {
                acc = acc + wx[j].clone() * ys[k].derivative(j) - wy[j].clone() * xs[k].derivative(j);
            }
            acc
        })
        .collect();
    Ok(Some(out))
}

/// Jacobi-Lie bracket `[#X, #Y]` of the anchored chart vector fields,
/// `D(#Y)·#X − D(#X)·#Y`.
pub fn anchored_bracket(x: &Section, y: &Section, u: &[f64], mode: DerivativeMode) -> Result<DVector<f64>> {
    match mode {
        DerivativeMode::Analytic => {
            let (Some(wx), Some(wy)) = (x.anchored_taylor(u, 1)?, y.anchored_taylor(u, 1)?) else {
                return Err(GeometryError::InvalidParameter(
                    "analytic mode needs jets for the patch and sections".into(),
                ));
            };
            let n = wx.len();
            Ok(DVector::from_fn(n, |i, _| {
                (0..n)
                    .map(|j| wy[i].partial(j) * wx[j].value() - wx[i].partial(j) * wy[j].value())
                    .sum()
            }))
        }
        DerivativeMode::FiniteDifference { step } => {
            check_margin(x.patch(), u, step)?;
            let wx = x.anchored(u)?;
            let wy = y.anchored(u)?;
            let dwy = directional(|p| y.anchored(p), u, &wx, step)?;
            let dwx = directional(|p| x.anchored(p), u, &wy, step)?;
            Ok(dwy - dwx)
        }
    }
}

struct BracketMap {
    x: Section,
    y: Section,
    mode: DerivativeMode,
}

impl AlgebraMap for BracketMap {
    fn output_dim(&self) -> usize {
        self.x.raw.output_dim()
    }

    fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        Ok(section_bracket(&self.x, &self.y, u, self.mode)?.value)
    }

    fn taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        if !self.mode.is_analytic() {
            return Ok(None);
        }
        bracket_taylor(&self.x, &self.y, u, order)
    }
}

/// Raw map `inner + a(u)·ℓ(u)`, where `ℓ(u)` is the normal of `A|_x` inside
/// `g`. Projects to the same section as `inner`.
pub struct NormalShift {
    pub patch: HypersurfacePatch,
    pub inner: Arc<dyn AlgebraMap>,
    pub amplitude: Arc<dyn ScalarMap>,
}

impl AlgebraMap for NormalShift {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        let x = self.patch.position(u)?;
        let nu = self.patch.gauss_map(u)?;
        let l = killing::tangency_functional(x.as_slice(), nu.as_slice());
        Ok(self.inner.value(u)? + DVector::from_vec(l) * self.amplitude.value(u))
    }

    fn taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        let (Some(x), Some(nu)) = (self.patch.taylor(u, order), self.patch.normal_taylor(u, order)) else {
            return Ok(None);
        };
        let (Some(inner), Some(a)) = (self.inner.taylor(u, order)?, self.amplitude.taylor(u, order)) else {
            return Ok(None);
        };
        let l = killing::tangency_functional(&x, &nu);
        Ok(Some(
            inner
                .into_iter()
                .zip(l)
                .map(|(c, li)| c + li * a.clone())
                .collect(),
        ))
    }
}

/// Section from a seeded random quadratic raw map (coefficients in `[-1, 1]`
/// after mapping the chart box onto `[-1, 1]^n`).
pub fn random_section(patch: &HypersurfacePatch, seed: u64) -> Section {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = PolynomialMap::random_on(&mut rng, patch.chart(), algebra_dim(patch.ambient_dim()));
    Section {
        patch: patch.clone(),
        raw: Arc::new(raw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::maps::Quadratic;
    use crate::hypersurface::preset_named;
    use crate::sampling;

    #[test]
    fn random_sections_are_deterministic_and_tangent() {
        let p = preset_named("sphere", 2).unwrap();
        let a = random_section(&p, 3);
        let b = random_section(&p, 3);
        let c = random_section(&p, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut max_diff: f64 = 0.0;
        for _ in 0..20 {
            let u = sampling::random_chart_point(&mut rng, p.chart(), 0.0);
            assert_eq!(a.value(&u).unwrap(), b.value(&u).unwrap());
            assert!(a.tangency_residual(&u).unwrap() < 1e-10);
            max_diff = max_diff.max((a.value(&u).unwrap() - c.value(&u).unwrap()).amax());
        }
        assert!(max_diff > 1e-3);
    }

    #[test]
    fn commuting_constant_sections_on_plane() {
        let p = preset_named("plane", 2).unwrap();
        let mut t1 = DVector::zeros(6);
        t1[3] = 1.0;
        let mut t2 = DVector::zeros(6);
        t2[4] = 1.0;
        let x = Section::constant(&p, &t1).unwrap();
        let y = Section::constant(&p, &t2).unwrap();
        for mode in [DerivativeMode::Analytic, DerivativeMode::finite_difference()] {
            let b = section_bracket(&x, &y, &[0.1, 0.2], mode).unwrap();
            assert!(b.value.amax() < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn analytic_and_finite_difference_brackets_agree() {
        let p = preset_named("sphere", 2).unwrap();
        let x = random_section(&p, 10);
        let y = random_section(&p, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let u = sampling::random_chart_point(&mut rng, p.chart(), 0.1);
            let a = section_bracket(&x, &y, &u, DerivativeMode::Analytic).unwrap();
            let f = section_bracket(&x, &y, &u, DerivativeMode::finite_difference()).unwrap();
            assert!((&a.value - &f.value).amax() < 1e-6 * (1.0 + a.value.amax()));
            assert!(a.tangency_residual < 1e-10);
            let swapped = section_bracket(&y, &x, &u, DerivativeMode::Analytic).unwrap();
            assert!((a.value + swapped.value).amax() < 1e-12);
        }
    }

    #[test]
    fn stencil_near_boundary_is_rejected() {
        let p = preset_named("plane", 2).unwrap();
        let x = random_section(&p, 1);
        let err = section_bracket(&x, &x, &[1.0 - 1e-6, 0.0], DerivativeMode::finite_difference());
        assert!(matches!(err, Err(GeometryError::StencilOutOfDomain { .. })));
    }

    #[test]
    fn normal_shift_projects_to_same_section() {
        let p = preset_named("graph", 2).unwrap();
        let x = random_section(&p, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let amp = Quadratic::random(&mut rng, &[0.0, 0.0]);
        let shifted = Section::new(
            &p,
            Arc::new(NormalShift {
                patch: p.clone(),
                inner: x.raw().clone(),
                amplitude: Arc::new(amp),
            }),
        )
        .unwrap();
        let u = [0.3, -0.2];
        assert!((x.raw().value(&u).unwrap() - shifted.raw().value(&u).unwrap()).amax() > 1e-3);
        assert!((x.value(&u).unwrap() - shifted.value(&u).unwrap()).amax() < 1e-13);
        let jx = x.taylor(&u, 1).unwrap().unwrap();
        let js = shifted.taylor(&u, 1).unwrap().unwrap();
        for (a, b) in jx.iter().zip(&js) {
            assert!((a.partial(0) - b.partial(0)).abs() < 1e-12);
        }
    }
}
