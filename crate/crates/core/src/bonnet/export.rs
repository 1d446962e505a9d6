use crate::error::{GeometryError, Result};
use crate::hypersurface::Chart;

/// CSV with chart coordinates then ambient coordinates, one row per node.
pub fn positions_csv(chart: &Chart, positions: &[Vec<f64>]) -> String {
    let n = chart.dim();
    let d = positions.first().map_or(n + 1, Vec::len);
    let mut header: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
    header.extend((0..d).map(|i| format!("x{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for (flat, p) in positions.iter().enumerate() {
        let u = chart.node(&chart.node_index(flat));
        let row: Vec<String> = u.iter().chain(p).map(|x| format!("{x:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Wavefront OBJ mesh of a grid of points in `R^3`, two triangles per cell.
pub fn obj_mesh(chart: &Chart, positions: &[Vec<f64>]) -> Result<String> {
    if chart.dim() != 2 {
        return Err(GeometryError::InvalidParameter(format!(
            "OBJ meshes need a 2-dimensional chart, got {}",
            chart.dim()
        )));
    }
    if positions.len() != chart.node_count() {
        return Err(GeometryError::DimensionMismatch {
            expected: chart.node_count(),
            got: positions.len(),
        });
    }
    let mut out = String::new();
    for p in positions {
        if p.len() != 3 {
            return Err(GeometryError::DimensionMismatch { expected: 3, got: p.len() });
        }
        out.push_str(&format!("v {:.16e} {:.16e} {:.16e}\n", p[0], p[1], p[2]));
    }
    let (rows, cols) = (chart.grid()[0], chart.grid()[1]);
    let vertex = |i: usize, j: usize| chart.flat_index(&[i, j]) + 1;
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let (a, b, c, d) = (vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1));
            out.push_str(&format!("f {a} {b} {c}\nf {a} {c} {d}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_counts() {
        let chart = Chart::uniform(0.0, 1.0, 2, 3).unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|k| vec![k as f64, 0.0, 0.0]).collect();
        let obj = obj_mesh(&chart, &pts).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 9);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 8);
        let csv = positions_csv(&chart, &pts);
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("u0,u1,x0,x1,x2\n"));
        assert!(obj_mesh(&Chart::uniform(0.0, 1.0, 1, 3).unwrap(), &pts[..3]).is_err());
    }
}
