use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::maps::{Quadratic, ScalarMap};
use super::section::{anchored_bracket, random_section, section_bracket, NormalShift, Section};
use super::DerivativeMode;
use crate::error::Result;
use crate::hypersurface::HypersurfacePatch;
use crate::report::{ResidualReport, ResidualStat};
use crate::sampling;

/// Names of the residuals produced by [`identity_residuals`].
pub const RESIDUAL_NAMES: [&str; 5] = ["anchor_morphism", "closure", "jacobi", "leibniz", "well_definedness"];

/// Settings for [`identity_residuals`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualConfig {
    pub mode: DerivativeMode,
    pub seed: u64,
    /// Tolerance applied to every residual without an override.
    pub tolerance: f64,
    pub overrides: BTreeMap<String, f64>,
    /// Sample points are drawn from the chart shrunk by this fraction per side.
    pub margin_fraction: f64,
}

impl ResidualConfig {
    /// Analytic derivatives, tolerance `1e-6`.
    pub fn analytic(seed: u64) -> Self {
        ResidualConfig {
            mode: DerivativeMode::Analytic,
            seed,
            tolerance: 1e-6,
            overrides: BTreeMap::new(),
            margin_fraction: 0.02,
        }
    }

    /// Central differences, tolerance `1e-4`.
    pub fn finite_difference(seed: u64) -> Self {
        ResidualConfig {
            mode: DerivativeMode::finite_difference(),
            tolerance: 1e-4,
            ..ResidualConfig::analytic(seed)
        }
    }

    /// Analytic when the patch supplies jets, otherwise finite differences.
    pub fn for_patch(patch: &HypersurfacePatch, seed: u64) -> Self {
        if patch.has_jets() {
            ResidualConfig::analytic(seed)
        } else {
            ResidualConfig::finite_difference(seed)
        }
    }

    pub fn tolerance_for(&self, name: &str) -> f64 {
        self.overrides.get(name).copied().unwrap_or(self.tolerance)
    }
}

/// Residuals at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResiduals {
    pub u: Vec<f64>,
    /// `‖[X, fY] − f[X, Y] − (df(#X))Y‖`.
    pub leibniz: f64,
    /// `‖[[X,Y],Z] + [[Y,Z],X] + [[Z,X],Y]‖`.
    pub jacobi: f64,
    /// `‖#[X,Y] − [#X,#Y]‖`.
    pub anchor_morphism: f64,
    /// `|⟨[X,Y](x), ν⟩|`.
    pub closure: f64,
    /// Change in `[X,Y]` when both raw maps are shifted along the normal of `A`.
    pub well_definedness: f64,
}

impl SampleResiduals {
    fn failed(u: Vec<f64>) -> Self {
        SampleResiduals {
            u,
            leibniz: f64::NAN,
            jacobi: f64::NAN,
            anchor_morphism: f64::NAN,
            closure: f64::NAN,
            well_definedness: f64::NAN,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "leibniz" => Some(self.leibniz),
            "jacobi" => Some(self.jacobi),
            "anchor_morphism" => Some(self.anchor_morphism),
            "closure" => Some(self.closure),
            "well_definedness" => Some(self.well_definedness),
            _ => None,
        }
    }
}

fn shifted(section: &Section, amplitude: Quadratic) -> Result<Section> {
    Section::new(
        section.patch(),
        Arc::new(NormalShift {
            patch: section.patch().clone(),
            inner: section.raw().clone(),
            amplitude: Arc::new(amplitude),
        }),
    )
}

/// Evaluate every residual for the sample drawn from `seed`.
pub fn sample_residuals(patch: &HypersurfacePatch, seed: u64, config: &ResidualConfig) -> SampleResiduals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = sampling::random_chart_point(&mut rng, patch.chart(), config.margin_fraction);
    let x = random_section(patch, rng.random());
    let y = random_section(patch, rng.random());
    let z = random_section(patch, rng.random());
    let chart = patch.chart();
    let f = Quadratic::random_on(&mut rng, chart);
    let shift_x = Quadratic::random_on(&mut rng, chart);
    let shift_y = Quadratic::random_on(&mut rng, chart);
    evaluate(patch, &u, &x, &y, &z, f, shift_x, shift_y, config.mode).unwrap_or_else(|_| SampleResiduals::failed(u))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    patch: &HypersurfacePatch,
    u: &[f64],
    x: &Section,
    y: &Section,
    z: &Section,
    f: Quadratic,
    shift_x: Quadratic,
    shift_y: Quadratic,
    mode: DerivativeMode,
) -> Result<SampleResiduals> {
    let xy = section_bracket(x, y, u, mode)?;

    // Leibniz, with df taken exactly from the polynomial.
    let df = f.taylor(u, 1).expect("polynomial jets");
    let grad = DVector::from_fn(u.len(), |i, _| df.partial(i));
    let wx = x.anchored(u)?;
    let f_arc: Arc<dyn ScalarMap> = Arc::new(f.clone());
    let x_fy = section_bracket(x, &y.scaled(f_arc), u, mode)?;
    let leibniz = (x_fy.value - &xy.value * f.value(u) - y.value(u)? * grad.dot(&wx)).norm();

    let mut cyclic = DVector::zeros(xy.value.len());
    for (a, b, c) in [(x, y, z), (y, z, x), (z, x, y)] {
        let inner = a.bracket(b, mode.nested());
        cyclic += section_bracket(&inner, c, u, mode.nested())?.value;
    }
    let jacobi = cyclic.norm();

    let (anchored_value, _) = patch.tangent_coordinates(u, &(crate::killing::evaluation_matrix(&patch.position(u)?) * &xy.value))?;
    let anchor_morphism = (anchored_value - anchored_bracket(x, y, u, mode)?).norm();

    let x2 = shifted(x, shift_x)?;
    let y2 = shifted(y, shift_y)?;
    let well_definedness = (section_bracket(&x2, &y2, u, mode)?.value - &xy.value).norm();

    Ok(SampleResiduals {
        u: u.to_vec(),
        leibniz,
        jacobi,
        anchor_morphism,
        closure: xy.tangency_residual,
        well_definedness,
    })
}

/// Per-sample seeds derived deterministically from the configured seed.
fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Evaluate all samples (in parallel) in sample order.
pub fn sample_all(patch: &HypersurfacePatch, samples: usize, config: &ResidualConfig) -> Vec<SampleResiduals> {
    (0..samples)
        .into_par_iter()
        .map(|i| sample_residuals(patch, sample_seed(config.seed, i), config))
        .collect()
}

/// Leibniz, Jacobi, anchor-morphism, closure and well-definedness residuals
/// over `samples` random `(X, Y, Z, f, u)`. Failed evaluations are recorded as
/// NaN and fail the report.
pub fn identity_residuals(patch: &HypersurfacePatch, samples: usize, config: &ResidualConfig) -> ResidualReport {
    let rows = sample_all(patch, samples, config);
    let mut report = ResidualReport::default();
    for name in RESIDUAL_NAMES {
        let values: Vec<f64> = rows.iter().map(|r| r.get(name).expect("known name")).collect();
        report.insert(name, ResidualStat::from_values(&values, config.tolerance_for(name)));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersurface::preset_named;

    #[test]
    fn plane_analytic_residuals_are_tiny() {
        let p = preset_named("plane", 2).unwrap();
        let mut config = ResidualConfig::analytic(1);
        config.tolerance = 1e-8;
        let report = identity_residuals(&p, 8, &config);
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn sphere_finite_difference_residuals() {
        let p = preset_named("sphere", 2).unwrap();
        let report = identity_residuals(&p, 6, &ResidualConfig::finite_difference(2));
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn unit_factor_gives_zero_leibniz() {
        let p = preset_named("graph", 2).unwrap();
        let x = random_section(&p, 1);
        let y = random_section(&p, 2);
        let one = Quadratic::constant(2, 1.0);
        let u = [0.1, 0.2];
        let a = section_bracket(&x, &y.scaled(Arc::new(one)), &u, DerivativeMode::Analytic).unwrap();
        let b = section_bracket(&x, &y, &u, DerivativeMode::Analytic).unwrap();
        assert!((a.value - b.value).norm() < 1e-14);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let p = preset_named("sphere", 2).unwrap();
        let config = ResidualConfig::analytic(9);
        let a = identity_residuals(&p, 4, &config);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| identity_residuals(&p, 4, &config));
        assert_eq!(a, b);
    }
}
