use surface_algebroid::algebroid::DerivativeMode;
use surface_algebroid::bonnet::{
    align_to_patch, flatness_residual, gauss_codazzi_residual, initial_frame, reconstruct_grid, FieldGrid,
    ReconstructionConfig, TensorFieldPair,
};
use surface_algebroid::fundamental_forms::omega_grid;
use surface_algebroid::hypersurface::{preset_named, HypersurfacePatch};

fn on_grid(name: &str, nodes: usize) -> HypersurfacePatch {
    let p = preset_named(name, 2).unwrap();
    p.with_chart(p.chart().with_grid(vec![nodes, nodes]).unwrap()).unwrap()
}

/// Forms sampled from the algebroid at the nodes, written to JSON, read back
/// and reconstructed. Returns the aligned RMS over the chart diameter.
fn chain_error(nodes: usize) -> f64 {
    let patch = on_grid("graph", nodes);
    let grid = omega_grid(&patch, DerivativeMode::Analytic).unwrap();
    let grid = FieldGrid::from_json(&grid.to_json()).unwrap();
    let fields = TensorFieldPair::from_grid(grid).unwrap();
    let u0 = patch.chart().center();
    let start = initial_frame(&fields, &u0).unwrap();
    let config = ReconstructionConfig {
        steps_per_unit: 128.0,
        check_nodes: 8,
        verify: false,
        ..ReconstructionConfig::default()
    };
    let result = reconstruct_grid(&fields, &u0, &start, &config).unwrap();
    align_to_patch(&result, &patch).unwrap().rms / patch.chart().diameter()
}

#[test]
fn gridded_omega_forms_converge_with_the_grid() {
    let coarse = chain_error(9);
    let fine = chain_error(17);
    // The interpolated Christoffel symbols are only first-order accurate, but
    // their errors largely cancel along the paths: positions converge at
    // second order (ratio near 4 when the spacing halves).
    assert!(fine < 1e-3, "fine {fine:e}");
    let ratio = coarse / fine;
    assert!((3.0..6.0).contains(&ratio), "coarse {coarse:e}, fine {fine:e}, ratio {ratio}");
}

#[test]
fn callback_fields_round_trip_within_tolerance() {
    for name in ["sphere", "cylinder", "graph"] {
        let patch = on_grid(name, 9);
        let fields = TensorFieldPair::from_patch(&patch);
        let u0 = patch.chart().center();
        let start = initial_frame(&fields, &u0).unwrap();
        let config = ReconstructionConfig {
            steps_per_unit: 256.0,
            check_nodes: 16,
            ..ReconstructionConfig::default()
        };
        let result = reconstruct_grid(&fields, &u0, &start, &config).unwrap();
        let rms = align_to_patch(&result, &patch).unwrap().rms;
        assert!(rms < 1e-4 * patch.chart().diameter(), "{name}: {rms:e}");
        assert!(result.integration.max_drift_after < 1e-6, "{name}");
    }
}

/// Wherever Gauss-Codazzi holds to 1e-5 the frame form is flat to 1e-4; the
/// bumped data must violate both somewhere.
#[test]
fn flatness_co_occurs_with_gauss_codazzi() {
    let patch = on_grid("sphere", 9);
    let consistent = TensorFieldPair::from_patch(&patch);
    let centre = patch.chart().center();
    let bumped = consistent.with_second_form_bump(0.2, centre, 0.5);
    let chart = patch.chart();
    let mut consistent_nodes = 0;
    let mut broken_nodes = 0;
    for fields in [&consistent, &bumped] {
        for flat in 0..chart.node_count() {
            let u = chart.node(&chart.node_index(flat));
            let Ok(gc) = gauss_codazzi_residual(fields, &u) else { continue };
            let Ok(flatness) = flatness_residual(fields, &u) else { continue };
            if gc.gauss.max(gc.codazzi) < 1e-5 {
                consistent_nodes += 1;
                assert!(flatness < 1e-4, "u = {u:?}: flatness {flatness:e} with GC {gc:?}");
            } else if flatness > 1e-4 {
                broken_nodes += 1;
            }
        }
    }
    assert!(consistent_nodes >= chart.node_count() / 2, "{consistent_nodes}");
    assert!(broken_nodes > 0);
}
