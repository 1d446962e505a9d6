use std::sync::Arc;

use nalgebra::DVector;

use super::maps::AlgebraMap;
use super::section::directional;
use super::DerivativeMode;
use crate::error::{GeometryError, Result};
use crate::jet::{Jet, Real};
use crate::killing;

/// A Lie algebra acting infinitesimally on a coordinate domain of `R^m`.
///
/// The action map `ξ ↦ ξ†` must be a Lie algebra homomorphism into vector
/// fields under the bracket `[U, V] = DV·U − DU·V`.
pub trait LieAlgebraAction: Clone + Send + Sync + 'static {
    fn algebra_dim(&self) -> usize;

    fn manifold_dim(&self) -> usize;

    /// `ξ†(m)`.
    fn act<T: Real>(&self, xi: &[T], m: &[T]) -> Vec<T>;

    fn bracket<T: Real>(&self, a: &[T], b: &[T]) -> Vec<T>;

    /// Distance from `m` to the boundary of the domain.
    fn margin(&self, _m: &[f64]) -> f64 {
        f64::INFINITY
    }
}

/// Killing fields acting on `R^d` by evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KillingAction {
    pub ambient: usize,
}

impl LieAlgebraAction for KillingAction {
    fn algebra_dim(&self) -> usize {
        killing::algebra_dim(self.ambient)
    }

    fn manifold_dim(&self) -> usize {
        self.ambient
    }

    fn act<T: Real>(&self, xi: &[T], m: &[T]) -> Vec<T> {
        killing::eval_coefficients(self.ambient, xi, m)
    }

    fn bracket<T: Real>(&self, a: &[T], b: &[T]) -> Vec<T> {
        killing::bracket_coefficients(self.ambient, a, b)
    }
}

fn check_margin<A: LieAlgebraAction>(action: &A, m: &[f64], step: f64) -> Result<()> {
    let margin = action.margin(m);
    if margin < super::MARGIN_STEPS * step {
        return Err(GeometryError::StencilOutOfDomain {
            point: m.to_vec(),
            margin,
        });
    }
    Ok(())
}

fn anchored<A: LieAlgebraAction>(action: &A, x: &dyn AlgebraMap, m: &[f64]) -> Result<DVector<f64>> {
    let xi = x.value(m)?;
    Ok(DVector::from_vec(action.act(xi.as_slice(), m)))
}

fn need_jets(jets: Option<Vec<Jet>>) -> Result<Vec<Jet>> {
    jets.ok_or_else(|| GeometryError::InvalidParameter("analytic mode needs jets of the maps".into()))
}

/// Jets of `[X, Y]` about `m` of the given order.
fn bracket_jets<A: LieAlgebraAction>(
    action: &A,
    x: &dyn AlgebraMap,
    y: &dyn AlgebraMap,
    m: &[f64],
    order: usize,
) -> Result<Option<Vec<Jet>>> {
    let (Some(xs), Some(ys)) = (x.taylor(m, order + 1)?, y.taylor(m, order + 1)?) else {
        return Ok(None);
    };
    let point = Jet::seed(m, order);
    let xs_low: Vec<Jet> = xs.iter().map(|j| j.truncate(order)).collect();
    let ys_low: Vec<Jet> = ys.iter().map(|j| j.truncate(order)).collect();
    let wx = action.act(&xs_low, &point);
    let wy = action.act(&ys_low, &point);
    let algebraic = action.bracket(&xs_low, &ys_low);
    let out = (0..xs.len())
        .map(|k| {
            let mut acc = algebraic[k].clone();
            for j in 0..m.len() {
                acc = acc + wx[j].clone() * ys[k].derivative(j) - wy[j].clone() * xs[k].derivative(j);
            }
            acc
        })
        .collect();
    Ok(Some(out))
}

/// Bracket of the action algebroid `g × M`:
/// `∇_{#X}Y − ∇_{#Y}X + {X, Y}` with `#ξ = ξ†`.
pub fn action_algebroid_bracket<A: LieAlgebraAction>(
    action: &A,
    x: &dyn AlgebraMap,
    y: &dyn AlgebraMap,
    m: &[f64],
    mode: DerivativeMode,
) -> Result<DVector<f64>> {
    match mode {
        DerivativeMode::Analytic => {
            let jets = need_jets(bracket_jets(action, x, y, m, 0)?)?;
            Ok(DVector::from_iterator(jets.len(), jets.iter().map(Real::value)))
        }
        DerivativeMode::FiniteDifference { step } => {
            check_margin(action, m, step)?;
            let xv = x.value(m)?;
            let yv = y.value(m)?;
            let wx = DVector::from_vec(action.act(xv.as_slice(), m));
            let wy = DVector::from_vec(action.act(yv.as_slice(), m));
            let dy = directional(|p| y.value(p), m, &wx, step)?;
            let dx = directional(|p| x.value(p), m, &wy, step)?;
            Ok(dy - dx + DVector::from_vec(action.bracket(xv.as_slice(), yv.as_slice())))
        }
    }
}

/// `[X, Y]` of the action algebroid packaged as a map.
struct ActionBracketMap<A> {
    action: A,
    x: Arc<dyn AlgebraMap>,
    y: Arc<dyn AlgebraMap>,
    mode: DerivativeMode,
}

impl<A: LieAlgebraAction> AlgebraMap for ActionBracketMap<A> {
    fn output_dim(&self) -> usize {
        self.action.algebra_dim()
    }

    fn value(&self, m: &[f64]) -> Result<DVector<f64>> {
        action_algebroid_bracket(&self.action, self.x.as_ref(), self.y.as_ref(), m, self.mode)
    }

    fn taylor(&self, m: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        if !self.mode.is_analytic() {
            return Ok(None);
        }
        bracket_jets(&self.action, self.x.as_ref(), self.y.as_ref(), m, order)
    }
}

/// `‖#[X, Y] − [#X, #Y]‖` at `m`; the right side is the Jacobi-Lie bracket of
/// the vector fields `ξ†` computed without the algebroid bracket.
pub fn action_anchor_morphism_residual<A: LieAlgebraAction>(
    action: &A,
    x: &dyn AlgebraMap,
    y: &dyn AlgebraMap,
    m: &[f64],
    mode: DerivativeMode,
) -> Result<f64> {
    let bracket = action_algebroid_bracket(action, x, y, m, mode)?;
    let left = DVector::from_vec(action.act(bracket.as_slice(), m));
    let right = match mode {
        DerivativeMode::Analytic => {
            let point = Jet::seed(m, 1);
            let xs = need_jets(x.taylor(m, 1)?)?;
            let ys = need_jets(y.taylor(m, 1)?)?;
            let wx = action.act(&xs, &point);
            let wy = action.act(&ys, &point);
            DVector::from_fn(m.len(), |i, _| {
                (0..m.len())
                    .map(|j| wy[i].partial(j) * wx[j].value() - wx[i].partial(j) * wy[j].value())
                    .sum()
            })
        }
        DerivativeMode::FiniteDifference { step } => {
            check_margin(action, m, step)?;
            let wx = anchored(action, x, m)?;
            let wy = anchored(action, y, m)?;
            directional(|p| anchored(action, y, p), m, &wx, step)?
                - directional(|p| anchored(action, x, p), m, &wy, step)?
        }
    };
    Ok((left - right).norm())
}

/// Norm of the cyclic sum `[[X,Y],Z] + [[Y,Z],X] + [[Z,X],Y]` at `m`.
pub fn action_jacobi_residual<A: LieAlgebraAction>(
    action: &A,
    x: &Arc<dyn AlgebraMap>,
    y: &Arc<dyn AlgebraMap>,
    z: &Arc<dyn AlgebraMap>,
    m: &[f64],
    mode: DerivativeMode,
) -> Result<f64> {
    let mut total = DVector::zeros(action.algebra_dim());
    for (a, b, c) in [(x, y, z), (y, z, x), (z, x, y)] {
        let inner = ActionBracketMap {
            action: action.clone(),
            x: a.clone(),
            y: b.clone(),
            mode: mode.nested(),
        };
        total += action_algebroid_bracket(action, &inner, c.as_ref(), m, mode.nested())?;
    }
    Ok(total.norm())
}
