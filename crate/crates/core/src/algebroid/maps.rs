//! Smooth maps on a chart: scalar functions and Killing-algebra-valued maps
//! (in canonical coefficients), optionally expandable as jets.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::hypersurface::Chart;
use crate::jet::{Jet, Real};

/// A map from chart coordinates into the Killing algebra (canonical
/// coefficients). Raw sections of the trivial bundle `g × Σ` are of this form.
pub trait AlgebraMap: Send + Sync {
    fn output_dim(&self) -> usize;

    fn value(&self, u: &[f64]) -> Result<DVector<f64>>;

    /// Jets about `u`, when available.
    fn taylor(&self, _u: &[f64], _order: usize) -> Result<Option<Vec<Jet>>> {
        Ok(None)
    }
}

pub trait ScalarMap: Send + Sync {
    fn value(&self, u: &[f64]) -> f64;

    fn taylor(&self, _u: &[f64], _order: usize) -> Option<Jet> {
        None
    }
}

/// Polynomial of degree ≤ 2 in `d = (u − center) ⊙ scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    center: Vec<f64>,
    scale: Vec<f64>,
    constant: f64,
    linear: Vec<f64>,
    /// Coefficients of `d_i d_j` for `i ≤ j`, row by row.
    quadratic: Vec<f64>,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, constant: f64, linear: Vec<f64>, quadratic: Vec<f64>) -> Self {
        let n = center.len();
        assert_eq!(linear.len(), n);
        assert_eq!(quadratic.len(), n * (n + 1) / 2);
        Quadratic {
            scale: vec![1.0; n],
            center,
            constant,
            linear,
            quadratic,
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Quadratic::new(vec![0.0; n], value, vec![0.0; n], vec![0.0; n * (n + 1) / 2])
    }

    /// Rescale each axis of the variable `d`.
    pub fn with_scale(mut self, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), self.center.len());
        self.scale = scale;
        self
    }

    /// Coefficients uniform in `[-1, 1]`, in the chart coordinates mapped
    /// affinely onto `[-1, 1]^n`.
    pub fn random_on<R: Rng>(rng: &mut R, chart: &Chart) -> Self {
        let scale = chart
            .lower()
            .iter()
            .zip(chart.upper())
            .map(|(lo, hi)| 2.0 / (hi - lo))
            .collect();
        Quadratic::random(rng, &chart.center()).with_scale(scale)
    }

    /// Coefficients uniform in `[-1, 1]`.
    pub fn random<R: Rng>(rng: &mut R, center: &[f64]) -> Self {
        let n = center.len();
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let constant = draw(1)[0];
        let linear = draw(n);
        let quadratic = draw(n * (n + 1) / 2);
        Quadratic::new(center.to_vec(), constant, linear, quadratic)
    }

    pub fn eval<T: Real>(&self, u: &[T]) -> T {
        let d: Vec<T> = u
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| (x.clone() - T::cst(*c)).scale(*s))
            .collect();
        let mut acc = T::cst(self.constant);
        for (di, &a) in d.iter().zip(&self.linear) {
            acc = acc + di.scale(a);
        }
        let mut k = 0;
        for i in 0..d.len() {
            for j in i..d.len() {
                acc = acc + (d[i].clone() * d[j].clone()).scale(self.quadratic[k]);
                k += 1;
            }
        }
        acc
    }
}

impl ScalarMap for Quadratic {
    fn value(&self, u: &[f64]) -> f64 {
        self.eval(u)
    }

    fn taylor(&self, u: &[f64], order: usize) -> Option<Jet> {
        Some(self.eval(&Jet::seed(u, order)))
    }
}

/// Algebra-valued map with one [`Quadratic`] per canonical coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    components: Vec<Quadratic>,
}

impl PolynomialMap {
    pub fn new(components: Vec<Quadratic>) -> Self {
        PolynomialMap { components }
    }

    pub fn constant(n: usize, value: &DVector<f64>) -> Self {
        PolynomialMap {
            components: value.iter().map(|&c| Quadratic::constant(n, c)).collect(),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, center: &[f64], output_dim: usize) -> Self {
        PolynomialMap {
            components: (0..output_dim).map(|_| Quadratic::random(rng, center)).collect(),
        }
    }

    /// Components from [`Quadratic::random_on`].
    pub fn random_on<R: Rng>(rng: &mut R, chart: &Chart, output_dim: usize) -> Self {
        PolynomialMap {
            components: (0..output_dim).map(|_| Quadratic::random_on(rng, chart)).collect(),
        }
    }

    pub fn eval<T: Real>(&self, u: &[T]) -> Vec<T> {
        self.components.iter().map(|q| q.eval(u)).collect()
    }
}

impl AlgebraMap for PolynomialMap {
    fn output_dim(&self) -> usize {
        self.components.len()
    }

    fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.eval(u)))
    }

    fn taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        Ok(Some(self.eval(&Jet::seed(u, order))))
    }
}

/// `f · X` for a scalar map `f` and algebra map `X`.
pub struct ScaledMap {
    pub factor: Arc<dyn ScalarMap>,
    pub inner: Arc<dyn AlgebraMap>,
}

impl AlgebraMap for ScaledMap {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        Ok(self.inner.value(u)? * self.factor.value(u))
    }

    fn taylor(&self, u: &[f64], order: usize) -> Result<Option<Vec<Jet>>> {
        let (Some(f), Some(x)) = (self.factor.taylor(u, order), self.inner.taylor(u, order)?) else {
            return Ok(None);
        };
        Ok(Some(x.into_iter().map(|c| c * f.clone()).collect()))
    }
}
