//! Report files and legacy VTK export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Discretization, ExperimentError, ExperimentReport};
use crate::quadrature::quadrature_triangle;

/// A finished run: the report and any `(file name, contents)` artifacts.
#[derive(Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub artifacts: Vec<(String, String)>,
}

impl RunOutput {
    /// Writes `report.json`, `errors.csv`, `summary.txt` and the artifacts.
    /// Returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir)?;
        let mut files = vec![
            (
                "report.json".to_string(),
                serde_json::to_string_pretty(&self.report).expect("serializable report") + "\n",
            ),
            ("errors.csv".to_string(), errors_csv(&self.report)),
            ("summary.txt".to_string(), summary(&self.report)),
        ];
        files.extend(self.artifacts.iter().cloned());
        let mut written = Vec::new();
        for (name, contents) in files {
            let path = dir.join(name);
            fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// All convergence tables, one row per series and level. Contains no
/// timings, so repeated runs give identical files.
pub fn errors_csv(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for s in &report.series {
        let csv = s.table.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if out.is_empty() {
            out.push_str(&format!("series,parameter,{header}\n"));
        }
        for line in lines {
            let _ = writeln!(out, "{},{:e},{line}", s.label, s.parameter);
        }
    }
    if out.is_empty() {
        out.push_str("series,parameter\n");
    }
    out
}

/// Human-readable digest: checks first, then the tables.
pub fn summary(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment {} ({})", report.experiment, report.element);
    for m in &report.meshes {
        let _ = writeln!(
            out,
            "  level {}: {} cells, {} edges, h = {:.4e}",
            m.level, m.cells, m.edges, m.h
        );
    }
    let _ = writeln!(out);
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "WARNING {w}");
    }
    for s in &report.series {
        let _ = writeln!(out, "\n[{}]\n{}", s.label, s.table.to_csv().trim_end());
    }
    for t in &report.transient {
        let _ = writeln!(
            out,
            "\nlevel {}: {} steps to t = {}, {} nonlinear iterations, max div {:.2e}, final ‖∂u/∂t‖ {:.2e}{}",
            t.level,
            t.steps,
            t.final_time,
            t.nonlinear_iterations,
            t.max_divergence,
            t.final_rate_of_change,
            if t.steady { " (steady)" } else { "" }
        );
    }
    for s in &report.stability {
        let beta = s.inf_sup.as_ref().map(|e| e.beta);
        let korn = s.korn.as_ref().map(|e| e.constant);
        let _ = writeln!(
            out,
            "{}: h = {:.4e}, inf-sup {beta:.5?}, korn {korn:.5?}",
            s.mesh, s.h
        );
    }
    if !report.kernels.is_empty() {
        let _ = writeln!(out);
        for k in &report.kernels {
            let _ = writeln!(
                out,
                "{} {}: nullity {}, Zn {:?}, gap {:.2e}",
                if k.passes() { "ok  " } else { "FAIL" },
                k.description,
                k.nullity,
                k.zn_nullity,
                k.gap
            );
        }
    }
    if let Some(c) = &report.cavity {
        let p = &c.primary;
        let _ = writeln!(
            out,
            "\nprimary vortex: ψ = {:.4e} at ({:.4}, {:.4}), ω = {:.4e}",
            p.psi, p.x, p.y, p.vorticity
        );
        if let Some(s) = &c.secondary {
            let _ = writeln!(
                out,
                "secondary vortex: ψ = {:.4e} at ({:.4}, {:.4}), ω = {:.4e}",
                s.psi, s.x, s.y, s.vorticity
            );
        }
        let _ = writeln!(
            out,
            "vorticity range [{:.4e}, {:.4e}]",
            c.vorticity_min, c.vorticity_max
        );
    }
    let _ = writeln!(
        out,
        "\n{}",
        if report.passed() {
            "ALL CHECKS PASSED"
        } else {
            "SOME CHECKS FAILED"
        }
    );
    out
}

/// Legacy ASCII VTK of a mixed solution. Every cell is written as a
/// quadratic triangle with its own six points, so discontinuous fields are
/// represented exactly at the nodes. Cell data holds `‖div u_h‖_{0,T}`.
pub fn vtk_string(d: &Discretization, u: &[f64], p: &[f64]) -> String {
    let v = &*d.velocity;
    let mesh = v.mesh();
    let n = mesh.num_cells();
    let nodes: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];
    let mut out = String::from("# vtk DataFile Version 3.0\nmixed finite element solution\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", 6 * n);
    for c in 0..n {
        let g = mesh.cell_geometry(c);
        for l in nodes {
            let x = g.to_physical(l);
            let _ = writeln!(out, "{:.17e} {:.17e} 0", x[0], x[1]);
        }
    }
    let _ = writeln!(out, "CELLS {n} {}", 7 * n);
    for c in 0..n {
        let b = 6 * c;
        let _ = writeln!(
            out,
            "6 {} {} {} {} {} {}",
            b,
            b + 1,
            b + 2,
            b + 3,
            b + 4,
            b + 5
        );
    }
    let _ = writeln!(out, "CELL_TYPES {n}");
    for _ in 0..n {
        out.push_str("22\n");
    }
    let _ = writeln!(out, "POINT_DATA {}\nVECTORS velocity double", 6 * n);
    for c in 0..n {
        for l in nodes {
            let w = v.evaluate(u, c, l);
            let _ = writeln!(out, "{:.17e} {:.17e} 0", w[0], w[1]);
        }
    }
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for c in 0..n {
        for l in nodes {
            let _ = writeln!(out, "{:.17e}", d.pressure.evaluate(p, c, l));
        }
    }
    let rule = quadrature_triangle(4).expect("supported degree");
    let _ = writeln!(
        out,
        "CELL_DATA {n}\nSCALARS divergence double 1\nLOOKUP_TABLE default"
    );
    for c in 0..n {
        let s = 2.0 * mesh.area(c);
        let sq: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| s * w * v.evaluate_divergence(u, c, *l).powi(2))
            .sum();
        let _ = writeln!(out, "{:.17e}", sq.sqrt());
    }
    out
}

pub fn write_vtk(path: &Path, d: &Discretization, u: &[f64], p: &[f64]) -> std::io::Result<()> {
    fs::write(path, vtk_string(d, u, p))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::experiments::config::ElementChoice;
    use crate::mesh::{structured_square_mesh, DiagonalRule};
    use crate::space::BoundarySelection;

    fn section<'a>(text: &'a str, start: &str, count: usize) -> Vec<&'a str> {
        let i = text.find(start).expect("section present") + start.len();
        text[i..].lines().skip(1).take(count).collect()
    }

    #[test]
    fn zero_solution_exports_zeros() {
        let mesh = Arc::new(structured_square_mesh(2, DiagonalRule::CrissCross));
        let d = Discretization::new(ElementChoice::Npp, &mesh, &BoundarySelection::All).unwrap();
        let u = vec![0.0; d.velocity.num_dofs()];
        let p = vec![0.0; d.pressure.num_dofs()];
        let text = vtk_string(&d, &u, &p);
        let n = mesh.num_cells();
        for line in section(&text, "VECTORS velocity double", 6 * n) {
            assert!(
                line.split_whitespace()
                    .all(|x| x.parse::<f64>().unwrap() == 0.0),
                "{line}"
            );
        }
        for line in section(&text, "LOOKUP_TABLE default", 6 * n) {
            assert_eq!(line.parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn exported_values_match_evaluation() {
        let mesh = Arc::new(structured_square_mesh(3, DiagonalRule::Alternating));
        for element in [ElementChoice::Npp, ElementChoice::TaylorHood] {
            let d = Discretization::new(element, &mesh, &BoundarySelection::None).unwrap();
            let u = d
                .velocity
                .interpolate(&|x| [(3.0 * x[0]).sin() * x[1], x[0].exp() - x[1]]);
            let p = d.pressure.interpolate(&|x| x[0] * x[0] - x[1]);
            let text = vtk_string(&d, &u, &p);
            let n = mesh.num_cells();
            let pts: Vec<[f64; 2]> = section(&text, "POINTS", 6 * n)
                .iter()
                .map(|l| {
                    let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
                    [v[0], v[1]]
                })
                .collect();
            let vel = section(&text, "VECTORS velocity double", 6 * n);
            let loc = crate::mesh::PointLocator::new(&mesh);
            for (k, (x, line)) in pts.iter().zip(&vel).enumerate() {
                let c = k / 6;
                let lambda = mesh.cell_geometry(c).barycentric(*x);
                let w = d.velocity.evaluate(&u, c, lambda);
                let v: Vec<f64> = line
                    .split_whitespace()
                    .map(|x| x.parse().unwrap())
                    .collect();
                assert!((v[0] - w[0]).abs() < 1e-12 && (v[1] - w[1]).abs() < 1e-12);
                assert!(loc.locate(*x).is_some());
            }
        }
    }
}
