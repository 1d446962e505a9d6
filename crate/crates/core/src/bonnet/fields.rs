use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::hypersurface::{Chart, HypersurfacePatch};

/// Largest asymmetry accepted in second-form data.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Finite-difference step for callback-backed fields.
pub const FIELD_STEP: f64 = 1e-5;

type FormsFn = dyn Fn(&[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Send + Sync;
type MetricFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;

#[derive(Clone)]
enum Source {
    /// Forms callback, plus an optional cheaper metric-only callback.
    Callback(Arc<FormsFn>, Option<Arc<MetricFn>>),
    Grid(Arc<FieldGrid>),
}

/// A metric `g` and symmetric tensor `II` on a chart.
#[derive(Clone)]
pub struct TensorFieldPair {
    chart: Chart,
    source: Source,
}

impl std::fmt::Debug for TensorFieldPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.source {
            Source::Callback(..) => "callback",
            Source::Grid(_) => "grid",
        };
        f.debug_struct("TensorFieldPair")
            .field("chart", &self.chart)
            .field("source", &kind)
            .finish()
    }
}

impl TensorFieldPair {
    pub fn from_fn<F>(chart: Chart, forms: F) -> Self
    where
        F: Fn(&[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Send + Sync + 'static,
    {
        TensorFieldPair {
            chart,
            source: Source::Callback(Arc::new(forms), None),
        }
    }

    /// Like [`TensorFieldPair::from_fn`], with a cheaper metric-only callback
    /// used where `II` is not needed (the neighbours of Christoffel stencils).
    pub fn from_fns<F, G>(chart: Chart, forms: F, metric: G) -> Self
    where
        F: Fn(&[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Send + Sync + 'static,
        G: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        TensorFieldPair {
            chart,
            source: Source::Callback(Arc::new(forms), Some(Arc::new(metric))),
        }
    }

    /// Classical first and second fundamental forms of a patch.
    pub fn from_patch(patch: &HypersurfacePatch) -> Self {
        let p = patch.clone();
        let q = patch.clone();
        TensorFieldPair::from_fns(
            patch.chart().clone(),
            move |u: &[f64]| p.classical_forms(u),
            move |u: &[f64]| q.classical_metric(u),
        )
    }

    /// Euclidean data `g = I`, `II = 0`.
    pub fn flat(chart: Chart) -> Self {
        let n = chart.dim();
        TensorFieldPair::from_fn(chart, move |_| Ok((DMatrix::identity(n, n), DMatrix::zeros(n, n))))
    }

    pub fn from_grid(grid: FieldGrid) -> Result<Self> {
        grid.validate()?;
        Ok(TensorFieldPair {
            chart: grid.chart.clone(),
            source: Source::Grid(Arc::new(grid)),
        })
    }

    /// Replace the data by `modify(u, g, II)`.
    pub fn modified<F>(&self, modify: F) -> Self
    where
        F: Fn(&[f64], DMatrix<f64>, DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    {
        let inner = self.clone();
        TensorFieldPair::from_fn(self.chart.clone(), move |u| {
            let (g, ii) = inner.raw_forms(u)?;
            Ok(modify(u, g, ii))
        })
    }

    /// `II` multiplied by a constant.
    pub fn with_scaled_second_form(&self, factor: f64) -> Self {
        self.modified(move |_, g, ii| (g, ii * factor))
    }

    /// `II + amplitude · b(u) · I` with the Gaussian bump
    /// `b(u) = exp(−|u − center|² / width²)`. The bump's gradient breaks the
    /// Codazzi equations wherever it is appreciable.
    pub fn with_second_form_bump(&self, amplitude: f64, center: Vec<f64>, width: f64) -> Self {
        let n = self.dim();
        self.modified(move |u, g, ii| {
            let r2: f64 = u.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
            let bump = amplitude * (-r2 / (width * width)).exp();
            (g, ii + DMatrix::identity(n, n) * bump)
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.source, Source::Grid(_))
    }

    /// Step for first derivatives of the forms. Gridded data use the same
    /// small step, which differentiates the bilinear interpolant exactly inside
    /// a cell: the Christoffel symbols are those of the metric the frame
    /// actually sees, so the Gram invariant holds to RK4 accuracy. The price is
    /// first-order accuracy in the grid spacing, since the first derivatives of
    /// that metric jump across cell edges.
    pub fn step(&self, _axis: usize) -> f64 {
        FIELD_STEP
    }

    /// Step for derivatives of derived quantities (Christoffel symbols, the
    /// frame form): the grid spacing for gridded data, whose interpolant has no
    /// usable second derivatives.
    pub fn outer_step(&self, axis: usize) -> f64 {
        match &self.source {
            Source::Callback(..) => crate::bonnet::geometry::NESTED_FIELD_STEP,
            Source::Grid(grid) => grid.chart.spacing(axis),
        }
    }

    fn raw_forms(&self, u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if u.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        match &self.source {
            Source::Callback(f, _) => f(u),
            Source::Grid(grid) => Ok(grid.interpolate(u)),
        }
    }

    /// `(g, II)` at `u`, with `g` checked positive definite and `II` symmetric.
    pub fn forms(&self, u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (g, ii) = self.raw_forms(u)?;
        let n = self.dim();
        if g.shape() != (n, n) || ii.shape() != (n, n) {
            return Err(GeometryError::FieldData(format!("tensors at {u:?} are not {n}×{n}")));
        }
        if g.clone().cholesky().is_none() || !g.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::SingularMetric { point: u.to_vec() });
        }
        let asym = (&ii - ii.transpose()).amax();
        if !(asym <= SYMMETRY_TOL * (1.0 + ii.amax())) {
            return Err(GeometryError::FieldData(format!(
                "second form at {u:?} is not symmetric (asymmetry {asym:e})"
            )));
        }
        Ok((g, ii))
    }

    pub fn metric(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let Source::Callback(_, Some(metric)) = &self.source else {
            return Ok(self.forms(u)?.0);
        };
        let n = self.dim();
        if u.len() != n {
            return Err(GeometryError::DimensionMismatch { expected: n, got: u.len() });
        }
        let g = metric(u)?;
        if g.shape() != (n, n) {
            return Err(GeometryError::FieldData(format!("metric at {u:?} is not {n}×{n}")));
        }
        if g.clone().cholesky().is_none() || !g.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::SingularMetric { point: u.to_vec() });
        }
        Ok(g)
    }

    pub fn second_form(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.forms(u)?.1)
    }

    /// Sample onto the chart grid.
    pub fn sample_grid(&self) -> Result<FieldGrid> {
        let chart = self.chart.clone();
        let mut g = Vec::with_capacity(chart.node_count());
        let mut ii = Vec::with_capacity(chart.node_count());
        for flat in 0..chart.node_count() {
            let u = chart.node(&chart.node_index(flat));
            let (gm, im) = self.forms(&u)?;
            g.push(row_major(&gm));
            ii.push(row_major(&im));
        }
        Ok(FieldGrid { chart, g, ii })
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Gridded `(g, II)`: one row-major `n × n` array per chart node, nodes in
/// [`Chart::node_index`] order (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub chart: Chart,
    pub g: Vec<Vec<f64>>,
    pub ii: Vec<Vec<f64>>,
}

impl FieldGrid {
    pub fn validate(&self) -> Result<()> {
        let n = self.chart.dim();
        let nodes = self.chart.node_count();
        for (name, data) in [("g", &self.g), ("ii", &self.ii)] {
            if data.len() != nodes {
                return Err(GeometryError::FieldData(format!(
                    "field '{name}' has {} nodes, chart grid needs {nodes}",
                    data.len()
                )));
            }
            if let Some((k, row)) = data.iter().enumerate().find(|(_, r)| r.len() != n * n) {
                return Err(GeometryError::FieldData(format!(
                    "field '{name}' node {k} has {} entries, expected {}",
                    row.len(),
                    n * n
                )));
            }
            if let Some(k) = data.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
                return Err(GeometryError::FieldData(format!("field '{name}' node {k} is not finite")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        crate::report::to_json_string(self).expect("grid serializes")
    }

    /// Parse and validate; errors name the offending line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: FieldGrid = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let msg = msg.strip_suffix(&suffix).unwrap_or(&msg);
            GeometryError::FieldData(format!("line {}, column {}: {msg}", e.line(), e.column()))
        })?;
        grid.validate()?;
        Ok(grid)
    }

    /// CSV with the chart coordinates then `g` and `II` entries, row-major.
    pub fn to_csv(&self) -> String {
        let n = self.chart.dim();
        let mut header: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        for name in ["g", "ii"] {
            for r in 0..n {
                for c in 0..n {
                    header.push(format!("{name}{r}{c}"));
                }
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for flat in 0..self.chart.node_count() {
            let u = self.chart.node(&self.chart.node_index(flat));
            let row: Vec<String> = u
                .iter()
                .chain(&self.g[flat])
                .chain(&self.ii[flat])
                .map(|x| format!("{x:.16e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Multilinear interpolation, clamped to the chart.
    pub fn interpolate(&self, u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.chart.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for axis in 0..n {
            let cells = self.chart.grid()[axis] - 1;
            let t = ((u[axis] - self.chart.lower()[axis]) / self.chart.spacing(axis)).clamp(0.0, cells as f64);
            let i = (t.floor() as usize).min(cells - 1);
            base[axis] = i;
            frac[axis] = t - i as f64;
        }
        let mut g = vec![0.0; n * n];
        let mut ii = vec![0.0; n * n];
        let mut idx = vec![0usize; n];
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            for axis in 0..n {
                let up = (corner >> axis) & 1 == 1;
                idx[axis] = base[axis] + up as usize;
                weight *= if up { frac[axis] } else { 1.0 - frac[axis] };
            }
            if weight == 0.0 {
                continue;
            }
            let flat = self.chart.flat_index(&idx);
            for k in 0..n * n {
                g[k] += weight * self.g[flat][k];
                ii[k] += weight * self.ii[flat][k];
            }
        }
        (DMatrix::from_row_slice(n, n, &g), DMatrix::from_row_slice(n, n, &ii))
    }
}
