use nalgebra::DMatrix;
use serde::Serialize;

use super::fields::TensorFieldPair;
use crate::error::{GeometryError, Result};

/// Outer step when a differenced quantity is differenced again.
pub const NESTED_FIELD_STEP: f64 = 1e-4;

/// Derivative along `axis` of a matrix-valued function on the chart: central
/// where the stencil fits, one-sided second order at the boundary.
pub(crate) fn partial<F>(fields: &TensorFieldPair, u: &[f64], axis: usize, h: f64, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let chart = fields.chart();
    let at = |k: f64| -> Vec<f64> {
        let mut p = u.to_vec();
        p[axis] += k * h;
        p
    };
    let lo = chart.lower()[axis];
    let hi = chart.upper()[axis];
    let x = u[axis];
    if x - h >= lo && x + h <= hi {
        Ok((f(&at(1.0))? - f(&at(-1.0))?) / (2.0 * h))
    } else if x + 2.0 * h <= hi {
        Ok((f(&at(0.0))? * -3.0 + f(&at(1.0))? * 4.0 - f(&at(2.0))?) / (2.0 * h))
    } else if x - 2.0 * h >= lo {
        Ok((f(&at(0.0))? * 3.0 - f(&at(-1.0))? * 4.0 + f(&at(-2.0))?) / (2.0 * h))
    } else {
        Err(GeometryError::StencilOutOfDomain {
            point: u.to_vec(),
            margin: chart.margin(u),
        })
    }
}

fn outer_step(fields: &TensorFieldPair, axis: usize) -> f64 {
    fields.outer_step(axis)
}

/// Christoffel symbols `Γ^k_{ij}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Γ^k_{·j}` as the matrix with entry `(k, i) = Γ^k_{ij}`.
    pub fn matrix(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |k, i| self.get(k, i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`.
pub fn christoffel(fields: &TensorFieldPair, u: &[f64]) -> Result<Christoffel> {
    christoffel_with_metric(fields, u, &fields.metric(u)?)
}

/// [`christoffel`] reusing an already evaluated `g(u)`.
pub(crate) fn christoffel_with_metric(fields: &TensorFieldPair, u: &[f64], g: &DMatrix<f64>) -> Result<Christoffel> {
    let n = fields.dim();
    let ginv = g
        .clone()
        .cholesky()
        .ok_or_else(|| GeometryError::SingularMetric { point: u.to_vec() })?
        .inverse();
    let dg: Vec<DMatrix<f64>> = (0..n)
        .map(|l| partial(fields, u, l, fields.step(l), |p| fields.metric(p)))
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                data[(k * n + i) * n + j] = 0.5 * acc;
            }
        }
    }
    Ok(Christoffel { n, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussCodazzi {
    /// `max |R_{ijkl} − (II_{jk}II_{il} − II_{ik}II_{jl})|` with
    /// `R_{ijkl} = ⟨R(∂_i, ∂_j)∂_k, ∂_l⟩`.
    pub gauss: f64,
    /// `max |∇_i II_{jk} − ∇_j II_{ik}|`.
    pub codazzi: f64,
}

/// Residuals of the Gauss and Codazzi equations at `u`.
pub fn gauss_codazzi_residual(fields: &TensorFieldPair, u: &[f64]) -> Result<GaussCodazzi> {
    let n = fields.dim();
    let (g, ii) = fields.forms(u)?;
    let gamma = christoffel_with_metric(fields, u, &g)?;
    // dgamma[a] has entries ∂_a Γ^k_{ij}
    let dgamma: Vec<Christoffel> = (0..n)
        .map(|a| {
            let h = outer_step(fields, a);
            let mut parts = Vec::with_capacity(n);
            for k in 0..n {
                parts.push(partial(fields, u, a, h, |p| {
                    let c = christoffel(fields, p)?;
                    Ok(DMatrix::from_fn(n, n, |i, j| c.get(k, i, j)))
                })?);
            }
            let mut data = vec![0.0; n * n * n];
            for (k, m) in parts.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        data[(k * n + i) * n + j] = m[(i, j)];
                    }
                }
            }
            Ok(Christoffel { n, data })
        })
        .collect::<Result<_>>()?;

    let mut gauss: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                // R^m_{ijk}
                let r_up: Vec<f64> = (0..n)
                    .map(|l| {
                        let mut r = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..n {
                            r += gamma.get(m, j, k) * gamma.get(l, i, m) - gamma.get(m, i, k) * gamma.get(l, j, m);
                        }
                        r
                    })
                    .collect();
                for l in 0..n {
                    let r_low: f64 = (0..n).map(|m| r_up[m] * g[(m, l)]).sum();
                    let rhs = ii[(j, k)] * ii[(i, l)] - ii[(i, k)] * ii[(j, l)];
                    gauss = gauss.max((r_low - rhs).abs());
                }
            }
        }
    }

    let dii: Vec<DMatrix<f64>> = (0..n)
        .map(|a| partial(fields, u, a, fields.step(a), |p| fields.second_form(p)))
        .collect::<Result<_>>()?;
    let cov = |i: usize, j: usize, k: usize| -> f64 {
        let mut v = dii[i][(j, k)];
        for m in 0..n {
            v -= gamma.get(m, i, j) * ii[(m, k)] + gamma.get(m, i, k) * ii[(j, m)];
        }
        v
    };
    let mut codazzi: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                codazzi = codazzi.max((cov(i, j, k) - cov(j, i, k)).abs());
            }
        }
    }
    Ok(GaussCodazzi { gauss, codazzi })
}

/// Generator matrices `Θ_j`, `(n+2) × (n+2)`, with `∂_j F = F Θ_j` for the
/// homogeneous frame `F = [[e_1 … e_n ν, f], [0, 1]]`.
pub fn frame_form(fields: &TensorFieldPair, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let n = fields.dim();
    let (g, ii) = fields.forms(u)?;
    let gamma = christoffel_with_metric(fields, u, &g)?;
    let shape = g
        .cholesky()
        .ok_or_else(|| GeometryError::SingularMetric { point: u.to_vec() })?
        .solve(&ii);
    Ok(assemble(n, &gamma, &ii, &shape))
}

/// `Θ_j` from `Γ`, `II` and the shape operator `g⁻¹II`.
pub(crate) fn assemble(n: usize, gamma: &Christoffel, ii: &DMatrix<f64>, shape: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    (0..n)
        .map(|j| {
            let mut theta = DMatrix::zeros(n + 2, n + 2);
            for i in 0..n {
                for k in 0..n {
                    theta[(k, i)] = gamma.get(k, i, j);
                }
                theta[(n, i)] = ii[(i, j)];
                theta[(i, n)] = -shape[(i, j)];
            }
            theta[(j, n + 1)] = 1.0;
            theta
        })
        .collect()
}

/// `max_{i<j} ‖∂_iΘ_j − ∂_jΘ_i + [Θ_i, Θ_j]‖_max`.
pub fn flatness_residual(fields: &TensorFieldPair, u: &[f64]) -> Result<f64> {
    let n = fields.dim();
    let theta = frame_form(fields, u)?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let di_tj = partial(fields, u, i, outer_step(fields, i), |p| Ok(frame_form(fields, p)?[j].clone()))?;
            let dj_ti = partial(fields, u, j, outer_step(fields, j), |p| Ok(frame_form(fields, p)?[i].clone()))?;
            let comm = &theta[i] * &theta[j] - &theta[j] * &theta[i];
            worst = worst.max((di_tj - dj_ti + comm).amax());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersurface::{preset_named, Chart};

    #[test]
    fn flat_data() {
        let f = TensorFieldPair::flat(Chart::uniform(-1.0, 1.0, 2, 5).unwrap());
        let u = [0.3, -0.2];
        assert_eq!(christoffel(&f, &u).unwrap().max_abs(), 0.0);
        let gc = gauss_codazzi_residual(&f, &u).unwrap();
        assert_eq!((gc.gauss, gc.codazzi), (0.0, 0.0));
        let theta = frame_form(&f, &u).unwrap();
        for (j, t) in theta.iter().enumerate() {
            let mut expected = DMatrix::zeros(4, 4);
            expected[(j, 3)] = 1.0;
            assert_eq!(t, &expected);
        }
    }

    #[test]
    fn sphere_christoffel_and_gc() {
        let p = preset_named("sphere", 2).unwrap();
        let f = TensorFieldPair::from_patch(&p);
        let u = [0.9, 0.4];
        let c = christoffel(&f, &u).unwrap();
        let expected = -u[0].sin() * u[0].cos();
        assert!((c.get(0, 1, 1) - expected).abs() < 1e-8);
        for k in 0..2 {
            assert!((c.get(k, 0, 1) - c.get(k, 1, 0)).abs() < 1e-10);
        }
        let gc = gauss_codazzi_residual(&f, &u).unwrap();
        assert!(gc.gauss < 1e-5 && gc.codazzi < 1e-5, "{gc:?}");
        assert!(flatness_residual(&f, &u).unwrap() < 1e-4);
        // at the chart edge the one-sided stencils take over
        let edge = [p.chart().lower()[0], p.chart().upper()[1]];
        let gc = gauss_codazzi_residual(&f, &edge).unwrap();
        assert!(gc.gauss < 1e-5 && gc.codazzi < 1e-5, "{gc:?}");
        let tampered = gauss_codazzi_residual(&f.with_scaled_second_form(1.1), &u).unwrap();
        assert!(tampered.gauss > 0.1);
    }

    #[test]
    fn frame_form_linear_in_second_form() {
        let p = preset_named("graph", 2).unwrap();
        let f = TensorFieldPair::from_patch(&p);
        let u = [0.2, 0.1];
        let a = frame_form(&f, &u).unwrap();
        let b = frame_form(&f.with_scaled_second_form(2.0), &u).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            for i in 0..2 {
                assert_eq!(tb[(2, i)], 2.0 * ta[(2, i)]);
                assert_eq!(tb[(i, 2)], 2.0 * ta[(i, 2)]);
                for k in 0..2 {
                    assert_eq!(tb[(k, i)], ta[(k, i)]);
                }
            }
        }
    }
}
