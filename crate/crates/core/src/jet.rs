//! Truncated multivariate Taylor expansions ("jets").
//!
//! A [`Jet`] holds the Taylor coefficients of a smooth function of the chart
//! coordinates around a fixed base point, up to some total order. Arithmetic
//! on jets is exact arithmetic on truncated power series, so pushing a jet of
//! the chart coordinates through a computation yields every derivative of the
//! result up to that order with no step-size error.
//!
//! The [`Real`] trait abstracts over `f64` and [`Jet`] so the same geometric
//! code (normals, projections, brackets) runs in both modes.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Highest total order any jet space supports.
pub const MAX_ORDER: usize = 4;

/// Scalar type usable by the generic geometry kernels.
pub trait Real:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    /// Constant (zeroth-order) part.
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn scale(&self, k: f64) -> Self {
        self.clone() * Self::cst(k)
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

/// Monomial bookkeeping shared by all jets in a fixed number of variables.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    /// `len_upto[k]` = number of monomials of total degree ≤ k.
    len_upto: Vec<usize>,
    /// Product table `(i, j, k)`: monomial i times monomial j is monomial k.
    /// Sorted by the degree of k; `mul_upto[r]` entries have degree ≤ r.
    mul: Vec<(u32, u32, u32)>,
    mul_upto: Vec<usize>,
    /// Per variable: `(source, target, factor)` for ∂/∂u_v.
    deriv: Vec<Vec<(usize, usize, f64)>>,
    index: HashMap<Vec<u8>, usize>,
}

impl JetSpace {
    fn build(nvars: usize) -> Self {
        let mut monomials: Vec<Vec<u8>> = Vec::new();
        let mut len_upto = Vec::with_capacity(MAX_ORDER + 1);
        for degree in 0..=MAX_ORDER {
            let mut current = vec![0u8; nvars];
            push_monomials(&mut monomials, &mut current, 0, degree);
            len_upto.push(monomials.len());
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let degree = |m: &[u8]| m.iter().map(|&e| e as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if degree(a) + degree(b) > MAX_ORDER {
                    continue;
                }
                let prod: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, index[&prod] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| degree(&monomials[k as usize]));
        let mul_upto = (0..=MAX_ORDER)
            .map(|r| {
                mul.iter()
                    .take_while(|&&(_, _, k)| degree(&monomials[k as usize]) <= r)
                    .count()
            })
            .collect();

        let deriv = (0..nvars)
            .map(|v| {
                monomials
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m[v] > 0)
                    .map(|(src, m)| {
                        let mut lowered = m.clone();
                        lowered[v] -= 1;
                        (src, index[&lowered], m[v] as f64)
                    })
                    .collect()
            })
            .collect();

        JetSpace {
            nvars,
            len_upto,
            mul,
            mul_upto,
            deriv,
            index,
        }
    }

    /// Shared space for `nvars` variables.
    pub fn get(nvars: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry(nvars)
            .or_insert_with(|| Arc::new(JetSpace::build(nvars)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    fn len(&self, order: usize) -> usize {
        self.len_upto[order]
    }

    fn monomial_index(&self, exponents: &[u8]) -> Option<usize> {
        self.index.get(exponents).copied()
    }
}

fn push_monomials(out: &mut Vec<Vec<u8>>, current: &mut Vec<u8>, var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.clone());
        current[var] = 0;
        return;
    }
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_monomials(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

/// Truncated Taylor expansion about a base point.
///
/// A jet without a space is an exact constant and combines with jets of any
/// order. Binary operations between jets of different orders truncate to the
/// lower order.
#[derive(Clone)]
pub struct Jet {
    space: Option<Arc<JetSpace>>,
    order: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant(x: f64) -> Self {
        Jet {
            space: None,
            order: usize::MAX,
            coeffs: vec![x],
        }
    }

    /// Jets of the coordinate functions about `base`: `u_i = base_i + δ_i`.
    pub fn seed(base: &[f64], order: usize) -> Vec<Jet> {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let space = JetSpace::get(base.len());
        let len = space.len(order);
        base.iter()
            .enumerate()
            .map(|(v, &x)| {
                let mut coeffs = vec![0.0; len];
                coeffs[0] = x;
                if order >= 1 {
                    let mut e = vec![0u8; base.len()];
                    e[v] = 1;
                    coeffs[space.monomial_index(&e).unwrap()] = 1.0;
                }
                Jet {
                    space: Some(space.clone()),
                    order,
                    coeffs,
                }
            })
            .collect()
    }

    /// Truncation order; `usize::MAX` for exact constants.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_constant(&self) -> bool {
        self.space.is_none()
    }

    /// Coefficient of the monomial with the given exponents (not the derivative).
    pub fn coefficient(&self, exponents: &[u8]) -> f64 {
        match &self.space {
            None => {
                if exponents.iter().all(|&e| e == 0) {
                    self.coeffs[0]
                } else {
                    0.0
                }
            }
            Some(space) => space
                .monomial_index(exponents)
                .filter(|&i| i < self.coeffs.len())
                .map_or(0.0, |i| self.coeffs[i]),
        }
    }

    /// First partial derivative at the base point.
    pub fn partial(&self, var: usize) -> f64 {
        match &self.space {
            None => 0.0,
            Some(space) => {
                let mut e = vec![0u8; space.nvars];
                e[var] = 1;
                self.coefficient(&e)
            }
        }
    }

    /// Second partial derivative ∂²/∂u_i∂u_j at the base point.
    pub fn second_partial(&self, i: usize, j: usize) -> f64 {
        match &self.space {
            None => 0.0,
            Some(space) => {
                let mut e = vec![0u8; space.nvars];
                e[i] += 1;
                e[j] += 1;
                let c = self.coefficient(&e);
                if i == j {
                    2.0 * c
                } else {
                    c
                }
            }
        }
    }

    /// Jet of ∂/∂u_var; one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        let Some(space) = &self.space else {
            return Jet::constant(0.0);
        };
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let len = space.len(order);
        let mut coeffs = vec![0.0; len];
        for &(src, dst, factor) in &space.deriv[var] {
            if dst < len && src < self.coeffs.len() {
                coeffs[dst] += factor * self.coeffs[src];
            }
        }
        Jet {
            space: Some(space.clone()),
            order,
            coeffs,
        }
    }

    pub fn truncate(&self, order: usize) -> Jet {
        match &self.space {
            None => self.clone(),
            Some(space) if order < self.order => Jet {
                space: Some(space.clone()),
                order,
                coeffs: self.coeffs[..space.len(order)].to_vec(),
            },
            Some(_) => self.clone(),
        }
    }

    /// `f(self)` given the Taylor coefficients `f^(k)(a)/k!` of `f` at the
    /// constant part `a`.
    fn compose(&self, taylor: &[f64]) -> Jet {
        let Some(_) = &self.space else {
            return Jet::constant(taylor[0]);
        };
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let top = self.order.min(taylor.len() - 1);
        let mut acc = Jet::constant(taylor[top]);
        for k in (0..top).rev() {
            acc = acc * delta.clone() + Jet::constant(taylor[k]);
        }
        acc
    }

    fn taylor_len(&self) -> usize {
        if self.space.is_some() {
            self.order + 1
        } else {
            1
        }
    }

    pub fn recip(&self) -> Jet {
        let a = self.coeffs[0];
        let taylor: Vec<f64> = (0..self.taylor_len())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / a.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&taylor)
    }

    fn binary(&self, other: &Jet, op: impl Fn(f64, f64) -> f64) -> Jet {
        let (space, order) = merged(self, other);
        match space {
            None => Jet::constant(op(self.coeffs[0], other.coeffs[0])),
            Some(space) => {
                let len = space.len(order);
                let coeffs = (0..len)
                    .map(|i| op(self.coeff_or_zero(i), other.coeff_or_zero(i)))
                    .collect();
                Jet {
                    space: Some(space),
                    order,
                    coeffs,
                }
            }
        }
    }

    fn coeff_or_zero(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    fn scaled(&self, k: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }
}

fn merged(a: &Jet, b: &Jet) -> (Option<Arc<JetSpace>>, usize) {
    match (&a.space, &b.space) {
        (None, None) => (None, usize::MAX),
        (Some(s), None) => (Some(s.clone()), a.order),
        (None, Some(s)) => (Some(s.clone()), b.order),
        (Some(s), Some(t)) => {
            debug_assert_eq!(s.nvars, t.nvars, "jets over different variable sets");
            (Some(s.clone()), a.order.min(b.order))
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        self.binary(&rhs, |x, y| x + y)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self.binary(&rhs, |x, y| x - y)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scaled(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if rhs.space.is_none() {
            return self.scaled(rhs.coeffs[0]);
        }
        if self.space.is_none() {
            return rhs.scaled(self.coeffs[0]);
        }
        let (space, order) = merged(&self, &rhs);
        let space = space.unwrap();
        let mut coeffs = vec![0.0; space.len(order)];
        for &(i, j, k) in &space.mul[..space.mul_upto[order]] {
            coeffs[k as usize] += self.coeffs[i as usize] * rhs.coeffs[j as usize];
        }
        Jet {
            space: Some(space),
            order,
            coeffs,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        if rhs.space.is_none() {
            return self.scaled(1.0 / rhs.coeffs[0]);
        }
        self * rhs.recip()
    }
}

impl Real for Jet {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }

    fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn sqrt(&self) -> Self {
        let a = self.coeffs[0];
        // binomial(1/2, k) a^(1/2 - k)
        let mut taylor = Vec::with_capacity(self.taylor_len());
        let mut binom = 1.0;
        for k in 0..self.taylor_len() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            taylor.push(binom * a.powf(0.5 - k as f64));
        }
        self.compose(&taylor)
    }

    fn sin(&self) -> Self {
        let a = self.coeffs[0];
        let cycle = [a.sin(), a.cos(), -a.sin(), -a.cos()];
        self.compose(&trig_taylor(&cycle, self.taylor_len()))
    }

    fn cos(&self) -> Self {
        let a = self.coeffs[0];
        let cycle = [a.cos(), -a.sin(), -a.cos(), a.sin()];
        self.compose(&trig_taylor(&cycle, self.taylor_len()))
    }

    fn scale(&self, k: f64) -> Self {
        self.scaled(k)
    }
}

fn trig_taylor(cycle: &[f64; 4], len: usize) -> Vec<f64> {
    let mut factorial = 1.0;
    (0..len)
        .map(|k| {
            if k > 0 {
                factorial *= k as f64;
            }
            cycle[k % 4] / factorial
        })
        .collect()
}
