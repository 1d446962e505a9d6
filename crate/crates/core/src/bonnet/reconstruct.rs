use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::align::{align_rigid, Alignment};
use super::fields::TensorFieldPair;
use super::integrate::{
    holonomy_loop, integrate_path_with_stats, rectangle_loop, FrameState, IntegrationStats, DEFAULT_STEPS_PER_UNIT,
};
use crate::error::{GeometryError, Result};
use crate::hypersurface::{orient_normal, Chart, HypersurfacePatch};
use crate::linalg;

/// Default tolerance for recovered `g` and `II`.
pub const VERIFICATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub steps_per_unit: f64,
    /// Nodes re-integrated along the opposite axis order.
    pub check_nodes: usize,
    pub seed: u64,
    /// Integrate around the rectangle spanned by the chart in the first two
    /// axes (n ≥ 2) and log the deviation.
    pub boundary_holonomy: bool,
    pub verify: bool,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
            check_nodes: 64,
            seed: 0,
            boundary_holonomy: true,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathIndependence {
    /// Largest position discrepancy between the two axis orders.
    pub residual: f64,
    pub nodes_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopRecord {
    pub path: Vec<Vec<f64>>,
    pub deviation: f64,
}

/// Fundamental forms recovered from the reconstructed grid by fourth-order
/// differences, compared with the input data at interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub nodes: usize,
    pub metric_error: f64,
    pub second_form_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionResult {
    pub chart: Chart,
    pub u0: Vec<f64>,
    pub steps_per_unit: f64,
    /// One position per chart node, in node order.
    pub positions: Vec<Vec<f64>>,
    pub path_independence: PathIndependence,
    pub integration: IntegrationStats,
    pub holonomy_log: Vec<LoopRecord>,
    pub verification: Option<Verification>,
}

impl ReconstructionResult {
    pub fn points(&self) -> Vec<DVector<f64>> {
        self.positions.iter().map(|p| DVector::from_column_slice(p)).collect()
    }
}

/// Integrate from `u₀` to every grid node along staircase paths (first axis,
/// then second, ...), sharing prefixes.
pub fn reconstruct_grid(
    fields: &TensorFieldPair,
    u0: &[f64],
    initial: &FrameState,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    let chart = fields.chart().clone();
    let n = chart.dim();
    if u0.len() != n {
        return Err(GeometryError::DimensionMismatch { expected: n, got: u0.len() });
    }
    if !chart.contains(u0) {
        return Err(GeometryError::PathExitsChart { point: u0.to_vec() });
    }
    let k = config.steps_per_unit;

    // (multi-index prefix, current point, state)
    let mut level: Vec<(Vec<usize>, Vec<f64>, FrameState)> = vec![(Vec::new(), u0.to_vec(), initial.clone())];
    let mut integration = IntegrationStats::default();
    for axis in 0..n {
        let values = chart.axis_values(axis);
        let next: Vec<(Sweep, IntegrationStats)> = level
            .par_iter()
            .map(|(prefix, u, state)| sweep(fields, axis, &values, prefix, u, state, k))
            .collect::<Result<_>>()?;
        level = Vec::with_capacity(next.iter().map(|s| s.0.len()).sum());
        for (entries, stats) in next {
            integration = integration.merge(&stats);
            level.extend(entries);
        }
    }

    let mut positions = vec![Vec::new(); chart.node_count()];
    for (idx, _, state) in &level {
        positions[chart.flat_index(idx)] = state.position().iter().copied().collect();
    }

    // opposite axis order on a sample of nodes
    let count = config.check_nodes.min(chart.node_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let chosen: Vec<usize> = sample(&mut rng, chart.node_count(), count).into_vec();
    let discrepancies: Vec<f64> = chosen
        .par_iter()
        .map(|&flat| {
            let node = chart.node(&chart.node_index(flat));
            let mut path = vec![u0.to_vec()];
            let mut p = u0.to_vec();
            for axis in (0..n).rev() {
                p[axis] = node[axis];
                path.push(p.clone());
            }
            let (state, _) = integrate_path_with_stats(fields, &path, initial, k)?;
            let expected = DVector::from_column_slice(&positions[flat]);
            Ok((state.position() - expected).amax())
        })
        .collect::<Result<_>>()?;
    let path_independence = PathIndependence {
        residual: discrepancies.iter().copied().fold(0.0, f64::max),
        nodes_checked: count,
    };

    let mut holonomy_log = Vec::new();
    if config.boundary_holonomy && n >= 2 {
        let mut a = u0.to_vec();
        let mut b = u0.to_vec();
        a[..2].copy_from_slice(&chart.lower()[..2]);
        b[..2].copy_from_slice(&chart.upper()[..2]);
        let path = rectangle_loop(&a, &b);
        let deviation = holonomy_loop(fields, &path, k)?;
        holonomy_log.push(LoopRecord { path, deviation });
    }

    let verification = if config.verify {
        verify_grid(fields, &chart, &positions)?
    } else {
        None
    };

    Ok(ReconstructionResult {
        chart,
        u0: u0.to_vec(),
        steps_per_unit: k,
        positions,
        path_independence,
        integration,
        holonomy_log,
        verification,
    })
}

type Sweep = Vec<(Vec<usize>, Vec<f64>, FrameState)>;

/// States at every grid value along `axis`, integrating outward from `u`,
/// with the counters of this sweep alone.
fn sweep(
    fields: &TensorFieldPair,
    axis: usize,
    values: &[f64],
    prefix: &[usize],
    u: &[f64],
    state: &FrameState,
    steps_per_unit: f64,
) -> Result<(Sweep, IntegrationStats)> {
    let c = u[axis];
    let mut out: Vec<Option<(Vec<f64>, FrameState)>> = vec![None; values.len()];
    let mut stats = IntegrationStats::default();
    let up: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= c).collect();
    let down: Vec<usize> = (0..values.len()).rev().filter(|&i| values[i] < c).collect();
    for order in [up, down] {
        let mut current = (u.to_vec(), state.clone());
        for i in order {
            let mut target = current.0.clone();
            target[axis] = values[i];
            let (next, s) = integrate_path_with_stats(fields, &[current.0.clone(), target.clone()], &current.1, steps_per_unit)?;
            stats = stats.merge(&s);
            current = (target, next);
            out[i] = Some(current.clone());
        }
    }
    let entries = out
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let (p, s) = entry.expect("every grid value visited");
            let mut idx = prefix.to_vec();
            idx.push(i);
            (idx, p, s)
        })
        .collect();
    Ok((entries, stats))
}

const D1: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];

/// Compare `g`, `II` recovered by fourth-order differences with the input at
/// nodes at least two cells from the boundary. `None` if no such node exists.
fn verify_grid(fields: &TensorFieldPair, chart: &Chart, positions: &[Vec<f64>]) -> Result<Option<Verification>> {
    let n = chart.dim();
    let d = n + 1;
    let grid = chart.grid();
    if grid.iter().any(|&g| g < 5) {
        return Ok(None);
    }
    let interior: Vec<usize> = (0..chart.node_count())
        .filter(|&flat| {
            chart
                .node_index(flat)
                .iter()
                .zip(grid)
                .all(|(&i, &g)| i >= 2 && i + 2 < g)
        })
        .collect();
    let pos = |idx: &[usize]| DVector::from_column_slice(&positions[chart.flat_index(idx)]);
    let errors: Vec<(f64, f64)> = interior
        .par_iter()
        .map(|&flat| {
            let idx = chart.node_index(flat);
            let shifted = |moves: &[(usize, isize)]| -> DVector<f64> {
                let mut j = idx.clone();
                for &(axis, k) in moves {
                    j[axis] = (j[axis] as isize + k) as usize;
                }
                pos(&j)
            };
            let mut jac = DMatrix::zeros(d, n);
            for a in 0..n {
                let h = chart.spacing(a);
                let col = (0..5).fold(DVector::zeros(d), |acc, s| acc + shifted(&[(a, s as isize - 2)]) * D1[s]) / h;
                jac.set_column(a, &col);
            }
            let nu = orient_normal(&jac, linalg::left_null_vector(&jac), 1.0);
            let mut ii = DMatrix::zeros(n, n);
            for a in 0..n {
                let ha = chart.spacing(a);
                let second = (0..5).fold(DVector::zeros(d), |acc, s| acc + shifted(&[(a, s as isize - 2)]) * D2[s]) / (ha * ha);
                ii[(a, a)] = second.dot(&nu);
                for b in a + 1..n {
                    let hb = chart.spacing(b);
                    let mut mixed = DVector::zeros(d);
                    for s in 0..5 {
                        for t in 0..5 {
                            let w = D1[s] * D1[t];
                            if w != 0.0 {
                                mixed += shifted(&[(a, s as isize - 2), (b, t as isize - 2)]) * w;
                            }
                        }
                    }
                    let v = mixed.dot(&nu) / (ha * hb);
                    ii[(a, b)] = v;
                    ii[(b, a)] = v;
                }
            }
            let (g_in, ii_in) = fields.forms(&chart.node(&idx))?;
            Ok(((jac.transpose() * &jac - g_in).amax(), (ii - ii_in).amax()))
        })
        .collect::<Result<_>>()?;
    let metric_error = errors.iter().map(|e| e.0).fold(0.0, f64::max);
    let second_form_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    Ok(Some(Verification {
        nodes: interior.len(),
        metric_error,
        second_form_error,
        tolerance: VERIFICATION_TOL,
        pass: metric_error < VERIFICATION_TOL && second_form_error < VERIFICATION_TOL,
    }))
}

/// Rigidly align the reconstruction onto the patch sampled at the same nodes.
pub fn align_to_patch(result: &ReconstructionResult, patch: &HypersurfacePatch) -> Result<Alignment> {
    let targets = (0..result.chart.node_count())
        .map(|flat| patch.position(&result.chart.node(&result.chart.node_index(flat))))
        .collect::<Result<Vec<_>>>()?;
    align_rigid(&result.points(), &targets)
}
