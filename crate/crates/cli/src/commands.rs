use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use surface_algebroid::algebroid::{identity_residuals, DerivativeMode, ResidualConfig, RESIDUAL_NAMES};
use surface_algebroid::bonnet::{
    align_to_patch, gauss_codazzi_residual, holonomy_loop, initial_frame, obj_mesh, positions_csv,
    reconstruct_grid, rectangle_loop, Alignment, FieldGrid, IntegrationStats, LoopRecord,
    ReconstructionConfig, TensorFieldPair, Verification, VERIFICATION_TOL,
};
use surface_algebroid::fundamental_forms::{
    compare_with_classical, omega_fields, omega_grid, ComparisonConfig, ASYMMETRY_TOL_ANALYTIC,
    ASYMMETRY_TOL_FD, COMPARISON_TOL,
};
use surface_algebroid::hypersurface::{preset, preset_catalogue, Chart, HypersurfacePatch, PresetInfo, PresetSpec};
use surface_algebroid::log_derivative::{
    check_bonnet_conditions_with, morphism_residuals, BonnetCheckConfig, BonnetConditionReport,
};
use surface_algebroid::report::{ResidualReport, ResidualStat};

use crate::config::{
    positive, AnalyzeArgs, DataSource, FormsSource, HolonomyArgs, PresetsArgs, ReconstructArgs, SourceArgs,
    Tolerances,
};
use crate::output::{emit_report, is_csv, read_text, resolve_path, write_text, CliError, Status};

/// Above this Gauss/Codazzi residual the data are not the forms of a surface
/// and reconstruction proceeds with a warning.
const GAUSS_CODAZZI_GATE: f64 = 1e-4;
/// Default bound on the gap between staircase and reversed-order positions.
const PATH_INDEPENDENCE_TOL: f64 = 1e-6;
/// Default holonomy below which a loop counts as closed.
const HOLONOMY_TOL: f64 = 1e-6;
/// Random points for the reconstruction conditions, besides the chart centre.
const CONDITION_SAMPLES: usize = 25;

#[derive(Debug, Clone, Serialize)]
struct SourceInfo {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<PresetSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fields: Option<String>,
    forms: &'static str,
}

struct Loaded {
    fields: TensorFieldPair,
    patch: Option<HypersurfacePatch>,
    info: SourceInfo,
}

fn mode_for(patch: &HypersurfacePatch, force_fd: bool) -> DerivativeMode {
    if patch.has_jets() && !force_fd {
        DerivativeMode::Analytic
    } else {
        DerivativeMode::finite_difference()
    }
}

fn mode_name(mode: DerivativeMode) -> &'static str {
    if mode.is_analytic() {
        "analytic"
    } else {
        "finite_difference"
    }
}

fn load(source: &SourceArgs, forms: FormsSource) -> Result<Loaded, CliError> {
    match source.resolve()? {
        DataSource::Preset(spec) => {
            let patch = preset(&spec)?;
            let (fields, forms) = match forms {
                FormsSource::Classical => (TensorFieldPair::from_patch(&patch), "classical"),
                FormsSource::Omega => (omega_fields(&patch, mode_for(&patch, false)), "omega"),
            };
            Ok(Loaded {
                fields,
                patch: Some(patch),
                info: SourceInfo {
                    preset: Some(spec),
                    fields: None,
                    forms,
                },
            })
        }
        DataSource::Fields(path) => {
            if forms == FormsSource::Omega {
                return Err(CliError::config("--forms omega needs a preset"));
            }
            let grid = load_grid(&path)?;
            Ok(Loaded {
                fields: TensorFieldPair::from_grid(grid)?,
                patch: None,
                info: SourceInfo {
                    preset: None,
                    fields: Some(path.display().to_string()),
                    forms: "grid",
                },
            })
        }
    }
}

fn load_grid(path: &Path) -> Result<FieldGrid, CliError> {
    let text = read_text(path)?;
    FieldGrid::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- analyze

#[derive(Serialize)]
struct AnalyzeReport {
    command: &'static str,
    preset: PresetSpec,
    mode: &'static str,
    seed: u64,
    samples: usize,
    identities: ResidualReport,
    morphism: ResidualStat,
    conditions: BonnetConditionReport,
    forms: ResidualReport,
    pass: bool,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Status, CliError> {
    let spec = match args.source.resolve()? {
        DataSource::Preset(spec) => spec,
        DataSource::Fields(_) => {
            return Err(CliError::config(
                "analyze needs an immersion (--preset); gridded forms carry no Killing algebroid",
            ))
        }
    };
    if args.samples == 0 {
        return Err(CliError::config("--samples must be at least 1"));
    }
    let mut allowed: Vec<&str> = RESIDUAL_NAMES.to_vec();
    allowed.extend(["morphism", "forms", "asymmetry"]);
    let tolerances = Tolerances::parse(&args.common.tolerances, &allowed)?;
    let patch = preset(&spec)?;
    let mode = mode_for(&patch, args.finite_difference);
    let seed = args.common.seed;

    let mut residual_config = if mode.is_analytic() {
        ResidualConfig::analytic(seed)
    } else {
        ResidualConfig::finite_difference(seed)
    };
    residual_config.overrides = tolerances
        .overrides()
        .iter()
        .filter(|(k, _)| RESIDUAL_NAMES.contains(&k.as_str()) || k.as_str() == "morphism")
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let identities = identity_residuals(&patch, args.samples, &residual_config);
    let morphism = morphism_residuals(&patch, args.samples, &residual_config);

    let conditions = check_bonnet_conditions_with(
        &patch,
        &patch.chart().center(),
        &BonnetCheckConfig {
            samples: CONDITION_SAMPLES,
            seed,
        },
    );

    let default_asymmetry = if mode.is_analytic() {
        ASYMMETRY_TOL_ANALYTIC
    } else {
        ASYMMETRY_TOL_FD
    };
    let comparison = ComparisonConfig {
        samples: args.samples,
        seed,
        mode,
        margin_fraction: 0.02,
        tolerance: tolerances.get("forms", COMPARISON_TOL),
        asymmetry_tolerance: tolerances.get("asymmetry", default_asymmetry),
    };
    let forms = compare_with_classical(&patch, &comparison);

    let pass = identities.all_pass() && morphism.pass && conditions.all_pass() && forms.all_pass();
    eprintln!(
        "analyze {} n={}: identities {}, morphism {}, conditions {}/4, forms {}",
        spec.name,
        spec.n,
        verdict(identities.all_pass()),
        verdict(morphism.pass),
        conditions.conditions_passed(),
        verdict(forms.all_pass()),
    );
    let report = AnalyzeReport {
        command: "analyze",
        preset: spec,
        mode: mode_name(mode),
        seed,
        samples: args.samples,
        identities,
        morphism,
        conditions,
        forms,
        pass,
    };
    let path = resolve_path(args.common.report.as_deref(), "analyze.json");
    emit_report(&report, path.as_deref())?;
    Ok(Status::from_pass(pass))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------- reconstruct

#[derive(Serialize)]
struct GaussCodazziGate {
    max_gauss: f64,
    max_codazzi: f64,
    nodes: usize,
    /// Nodes where the residual could not be evaluated.
    skipped: usize,
    threshold: f64,
    consistent: bool,
}

#[derive(Serialize)]
struct PathCheck {
    residual: f64,
    nodes_checked: usize,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct AlignmentInfo {
    #[serde(flatten)]
    fit: Alignment,
    /// Largest distance between an aligned node and the patch.
    max_distance: f64,
}

#[derive(Serialize)]
struct ReconstructReport {
    command: &'static str,
    source: SourceInfo,
    chart: Chart,
    u0: Vec<f64>,
    steps_per_unit: f64,
    gauss_codazzi: GaussCodazziGate,
    path_independence: PathCheck,
    integration: IntegrationStats,
    holonomy: Vec<LoopRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<Verification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment: Option<AlignmentInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fields_dump: Option<String>,
    pass: bool,
}

fn gauss_codazzi_gate(fields: &TensorFieldPair, threshold: f64) -> GaussCodazziGate {
    let chart = fields.chart();
    let values: Vec<Option<(f64, f64)>> = (0..chart.node_count())
        .into_par_iter()
        .map(|flat| {
            gauss_codazzi_residual(fields, &chart.node(&chart.node_index(flat)))
                .ok()
                .filter(|r| r.gauss.is_finite() && r.codazzi.is_finite())
                .map(|r| (r.gauss, r.codazzi))
        })
        .collect();
    let ok: Vec<(f64, f64)> = values.iter().flatten().copied().collect();
    let max_gauss = ok.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_codazzi = ok.iter().map(|r| r.1).fold(0.0, f64::max);
    GaussCodazziGate {
        max_gauss,
        max_codazzi,
        nodes: values.len(),
        skipped: values.len() - ok.len(),
        threshold,
        consistent: max_gauss.max(max_codazzi) <= threshold,
    }
}

fn chart_point(flag: &str, value: &Option<Vec<f64>>, chart: &Chart) -> Result<Vec<f64>, CliError> {
    let u = match value {
        Some(u) => u.clone(),
        None => return Ok(chart.center()),
    };
    if u.len() != chart.dim() {
        return Err(CliError::config(format!(
            "{flag} needs {} coordinates, got {}",
            chart.dim(),
            u.len()
        )));
    }
    if !chart.contains(&u) {
        return Err(CliError::config(format!(
            "{flag} {u:?} lies outside the chart {:?}..{:?}",
            chart.lower(),
            chart.upper()
        )));
    }
    Ok(u)
}

pub fn reconstruct(args: &ReconstructArgs) -> Result<Status, CliError> {
    let tolerances = Tolerances::parse(
        &args.common.tolerances,
        &["gauss_codazzi", "path_independence", "verification"],
    )?;
    let steps = positive("--steps", args.steps)?;
    let loaded = load(&args.source, args.forms)?;
    let fields = &loaded.fields;
    let chart = fields.chart().clone();
    let u0 = chart_point("--x0", &args.x0, &chart)?;

    let mesh_path = resolve_path(
        args.out.as_deref(),
        if chart.dim() == 2 { "mesh.obj" } else { "positions.csv" },
    );
    if let Some(path) = &mesh_path {
        if !is_csv(path) && chart.dim() != 2 {
            return Err(CliError::config(format!(
                "{}: OBJ output needs n = 2; use a .csv path",
                path.display()
            )));
        }
    }
    let fields_dump = match &args.dump_fields {
        Some(path) => {
            let patch = loaded
                .patch
                .as_ref()
                .ok_or_else(|| CliError::config("--dump-fields needs a preset"))?;
            let grid = omega_grid(patch, mode_for(patch, false))?;
            write_text(path, &if is_csv(path) { grid.to_csv() } else { grid.to_json() + "\n" })?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let gate = gauss_codazzi_gate(fields, tolerances.get("gauss_codazzi", GAUSS_CODAZZI_GATE));
    if !gate.consistent {
        eprintln!(
            "warning: data violate Gauss/Codazzi (max {:.3e} / {:.3e} > {:.1e}); the result is not path independent",
            gate.max_gauss, gate.max_codazzi, gate.threshold
        );
    }

    let initial = initial_frame(fields, &u0)?;
    let config = ReconstructionConfig {
        steps_per_unit: steps,
        check_nodes: args.check_nodes,
        seed: args.common.seed,
        boundary_holonomy: true,
        verify: true,
    };
    let result = reconstruct_grid(fields, &u0, &initial, &config)
        .map_err(|e| CliError::config(format!("integration failed: {e}")))?;

    let path_tol = tolerances.get("path_independence", PATH_INDEPENDENCE_TOL);
    let path_independence = PathCheck {
        residual: result.path_independence.residual,
        nodes_checked: result.path_independence.nodes_checked,
        tolerance: path_tol,
        pass: result.path_independence.residual <= path_tol,
    };
    let verification = result.verification.clone().map(|mut v| {
        v.tolerance = tolerances.get("verification", VERIFICATION_TOL);
        v.pass = v.metric_error < v.tolerance && v.second_form_error < v.tolerance;
        v
    });

    let (positions, alignment) = match &loaded.patch {
        Some(patch) => {
            let fit = align_to_patch(&result, patch)?;
            let aligned: Vec<Vec<f64>> = result
                .points()
                .iter()
                .map(|p| fit.motion.apply(p).as_slice().to_vec())
                .collect();
            let mut max_distance: f64 = 0.0;
            for (flat, p) in aligned.iter().enumerate() {
                let target = patch.position(&chart.node(&chart.node_index(flat)))?;
                let d = p.iter().zip(target.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                max_distance = max_distance.max(d);
            }
            (aligned, Some(AlignmentInfo { fit, max_distance }))
        }
        None => (result.positions.clone(), None),
    };
    if let Some(path) = &mesh_path {
        let text = if is_csv(path) {
            positions_csv(&chart, &positions)
        } else {
            obj_mesh(&chart, &positions)?
        };
        write_text(path, &text)?;
    }

    // Verification compares difference quotients on the output grid, so it
    // measures grid resolution as much as the integration; it is reported but
    // only path independence decides the exit code.
    let pass = path_independence.pass;
    eprintln!(
        "reconstruct: path independence {:.3e} ({}), {} RK4 steps",
        path_independence.residual,
        verdict(path_independence.pass),
        result.integration.steps
    );
    let report = ReconstructReport {
        command: "reconstruct",
        source: loaded.info,
        chart,
        u0,
        steps_per_unit: steps,
        gauss_codazzi: gate,
        path_independence,
        integration: result.integration,
        holonomy: result.holonomy_log,
        verification,
        alignment,
        mesh: mesh_path.map(|p| p.display().to_string()),
        fields_dump,
        pass,
    };
    let report_path = resolve_path(args.common.report.as_deref(), "reconstruct.json");
    emit_report(&report, report_path.as_deref())?;
    Ok(Status::from_pass(pass))
}

// ---------------------------------------------------------------- holonomy

#[derive(Serialize)]
struct Bump {
    amplitude: f64,
    center: Vec<f64>,
    width: f64,
}

#[derive(Serialize)]
struct HolonomyReport {
    command: &'static str,
    source: SourceInfo,
    path: Vec<Vec<f64>>,
    steps_per_unit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bump: Option<Bump>,
    deviation: f64,
    threshold: f64,
    closes: bool,
}

fn loop_corner(flag: &str, value: &Option<Vec<f64>>, chart: &Chart, offset: f64) -> Result<Vec<f64>, CliError> {
    let mut corner = chart.center();
    match value {
        Some(v) if v.len() == 2 => corner[..2].copy_from_slice(v),
        Some(v) => {
            return Err(CliError::config(format!(
                "{flag} takes the first two chart coordinates, got {}",
                v.len()
            )))
        }
        None => {
            for axis in 0..2 {
                corner[axis] = (corner[axis] + offset).clamp(chart.lower()[axis], chart.upper()[axis]);
            }
        }
    }
    if !chart.contains(&corner) {
        return Err(CliError::config(format!("{flag} {:?} lies outside the chart", &corner[..2])));
    }
    Ok(corner)
}

pub fn holonomy(args: &HolonomyArgs) -> Result<Status, CliError> {
    let tolerances = Tolerances::parse(&args.common.tolerances, &["holonomy"])?;
    let steps = positive("--steps", args.steps)?;
    let width = positive("--bump-width", args.bump_width)?;
    if !args.bump.is_finite() {
        return Err(CliError::config("--bump must be finite"));
    }
    let loaded = load(&args.source, FormsSource::Classical)?;
    let chart = loaded.fields.chart().clone();
    if chart.dim() < 2 {
        return Err(CliError::config("a holonomy loop needs a chart of dimension at least 2"));
    }
    let a = loop_corner("--lower", &args.lower, &chart, -0.5)?;
    let b = loop_corner("--upper", &args.upper, &chart, 0.5)?;
    let path = rectangle_loop(&a, &b);

    let (fields, bump) = if args.bump != 0.0 {
        let center: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let bumped = loaded.fields.with_second_form_bump(args.bump, center.clone(), width);
        let bump = Bump {
            amplitude: args.bump,
            center,
            width,
        };
        (bumped, Some(bump))
    } else {
        (loaded.fields.clone(), None)
    };

    let deviation = holonomy_loop(&fields, &path, steps)?;
    let threshold = tolerances.get("holonomy", HOLONOMY_TOL);
    let closes = deviation < threshold;
    eprintln!(
        "holonomy deviation {deviation:.6e} ({})",
        if closes { "closes" } else { "does not close" }
    );
    let report = HolonomyReport {
        command: "holonomy",
        source: loaded.info,
        path,
        steps_per_unit: steps,
        bump,
        deviation,
        threshold,
        closes,
    };
    let report_path = resolve_path(args.common.report.as_deref(), "holonomy.json");
    emit_report(&report, report_path.as_deref())?;
    Ok(Status::Pass)
}

// ---------------------------------------------------------------- presets

#[derive(Serialize)]
struct PresetsReport {
    presets: Vec<PresetInfo>,
}

pub fn presets(args: &PresetsArgs) -> Result<Status, CliError> {
    let report = PresetsReport {
        presets: preset_catalogue(),
    };
    let path: Option<PathBuf> = args.report.clone();
    emit_report(&report, path.as_deref())?;
    Ok(Status::Pass)
}
