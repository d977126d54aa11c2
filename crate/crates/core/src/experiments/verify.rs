//! Verification suites: element properties, local kernels and atoms, and
//! the stability constants.

use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::config::{ElementChoice, ExperimentConfig, MeshSource};
use super::{
    at, mesh_hierarchy, mesh_info, Check, Discretization, ExperimentError, ExperimentReport, Series,
};
use crate::analysis::kernels::macroelement_atoms;
use crate::analysis::kernels::{check_atom, null_space, span_residual};
use crate::analysis::{
    atom_function, compute_errors, estimate_inf_sup, estimate_korn, kernel_dimension,
    ConvergenceTable, ExactSolution, Expected, KernelReport, Patch, StabilityReport, VelocityNorm,
};
use crate::element::{dof_functionals, CellGeometry, NppElement};
use crate::mesh::{random_fan, Point, Triangulation};
use crate::quadrature::{quadrature_edge, quadrature_triangle};
use crate::space::{BoundarySelection, PressureSpace, VelocityDiscretization, VelocitySpace};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementVerification {
    pub triangles: usize,
    /// `max |φ_r(ψ_b) − δ_rb|` over all sampled triangles.
    pub unisolvence_deviation: f64,
    pub quadratic_fields: usize,
    /// Largest `|u − Π_h u| / max|u|` at quadrature points.
    pub quadratic_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomSummary {
    pub description: String,
    pub divergence: f64,
    pub conformity_defect: f64,
    pub outside: f64,
    pub span_residual: f64,
    pub passed: bool,
}

const UNISOLVENCE_TOL: f64 = 1e-10;
const QUADRATIC_TOL: f64 = 1e-11;
const ATOM_TOL: f64 = 1e-11;
const SPAN_TOL: f64 = 1e-9;

/// Well-shaped, counter-clockwise random triangle in `[-2, 2]²`.
fn random_triangle(rng: &mut impl Rng) -> CellGeometry {
    loop {
        let [a, b, c]: [Point; 3] =
            std::array::from_fn(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let pts = if det > 0.0 { [a, b, c] } else { [a, c, b] };
        if let Ok(g) = CellGeometry::new(pts) {
            if g.area > 0.05 * g.diameter().powi(2) {
                return g;
            }
        }
    }
}

/// Unisolvence, local quadratic reproduction and interpolation rates.
pub(crate) fn element(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
) -> Result<(), ExperimentError> {
    let mut rng = StdRng::seed_from_u64(config.seed);
    let rule = quadrature_edge(6).expect("supported degree");
    let triangles = config.samples;
    let unisolvence_deviation = report.timed("unisolvence", || {
        let mut worst = 0.0f64;
        for _ in 0..triangles {
            let g = random_triangle(&mut rng);
            let e = NppElement::new(g.clone());
            for b in 0..12 {
                let f = |x: Point| e.values(g.barycentric(x))[b];
                for (r, v) in dof_functionals(&g, &f, &rule).iter().enumerate() {
                    worst = worst.max((v - if r == b { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        worst
    });
    report.checks.push(Check::new(
        "unisolvence",
        unisolvence_deviation <= UNISOLVENCE_TOL,
        format!(
            "max deviation from identity {unisolvence_deviation:.2e} over {triangles} triangles"
        ),
    ));

    // quadratic fields on the base mesh refined once
    let base = Arc::new(super::base_mesh(config)?.refine_uniform());
    let v =
        VelocitySpace::new(base.clone(), &BoundarySelection::None).map_err(at("velocity space"))?;
    let fields = 20;
    let quadratic_deviation = report.timed("quadratic reproduction", || {
        let tri = quadrature_triangle(6).expect("supported degree");
        let mut worst = 0.0f64;
        for _ in 0..fields {
            let c: [[f64; 6]; 2] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let q = |k: usize, x: Point| {
                let m = [1.0, x[0], x[1], x[0] * x[0], x[0] * x[1], x[1] * x[1]];
                c[k].iter().zip(m).map(|(a, b)| a * b).sum::<f64>()
            };
            let f = |x: Point| [q(0, x), q(1, x)];
            let u = v.interpolate(&f);
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for cell in 0..base.num_cells() {
                let geom = base.cell_geometry(cell);
                for lambda in &tri.points {
                    let exact = f(geom.to_physical(*lambda));
                    let uh = v.evaluate(&u, cell, *lambda);
                    err = err.max((exact[0] - uh[0]).abs().max((exact[1] - uh[1]).abs()));
                    scale = scale.max(exact[0].abs().max(exact[1].abs()));
                }
            }
            worst = worst.max(err / scale);
        }
        worst
    });
    report.checks.push(Check::new(
        "quadratic reproduction",
        quadratic_deviation <= QUADRATIC_TOL,
        format!("max relative deviation {quadratic_deviation:.2e} over {fields} fields"),
    ));

    // interpolation error of a fixed smooth field
    let meshes = mesh_hierarchy(config)?;
    report.meshes = meshes
        .iter()
        .enumerate()
        .map(|(l, m)| mesh_info(l, m))
        .collect();
    let (u, g) = smooth_field();
    let mut table = ConvergenceTable::default();
    report.timed("interpolation", || -> Result<(), ExperimentError> {
        for mesh in &meshes {
            let d = Discretization::new(ElementChoice::Npp, mesh, &BoundarySelection::None)?;
            let uh = d.velocity.interpolate(&u);
            table.levels.push(compute_errors(
                &*d.velocity,
                &*d.pressure,
                &uh,
                None,
                &ExactSolution {
                    u: &u,
                    grad_u: &g,
                    p: None,
                },
                1.0,
            ));
        }
        Ok(())
    })?;
    let l2 = table
        .rates(|r| Some(r.velocity_l2))
        .last()
        .copied()
        .flatten();
    let h1 = table
        .rates(|r| Some(r.velocity_h1))
        .last()
        .copied()
        .flatten();
    report
        .checks
        .push(super::band("interpolation L2 rate", l2, 2.8, 3.2));
    report
        .checks
        .push(super::band("interpolation H1 rate", h1, 1.8, 2.2));
    report.series.push(Series {
        label: "interpolation".into(),
        parameter: 0.0,
        table,
    });
    report.element_verification = Some(ElementVerification {
        triangles,
        unisolvence_deviation,
        quadratic_fields: fields,
        quadratic_deviation,
    });
    Ok(())
}

type Field = fn(Point) -> [f64; 2];
type Gradient = fn(Point) -> [[f64; 2]; 2];

fn smooth_field() -> (Field, Gradient) {
    fn u(x: Point) -> [f64; 2] {
        [(2.0 * x[0]).sin() * x[1].exp(), (x[0] * x[1]).cos()]
    }
    fn g(x: Point) -> [[f64; 2]; 2] {
        let e = x[1].exp();
        let s = (x[0] * x[1]).sin();
        [
            [2.0 * (2.0 * x[0]).cos() * e, (2.0 * x[0]).sin() * e],
            [-x[1] * s, -x[0] * s],
        ]
    }
    (u, g)
}

fn npp_space(mesh: Triangulation) -> Result<VelocitySpace, ExperimentError> {
    VelocitySpace::new(Arc::new(mesh), &BoundarySelection::None).map_err(at("velocity space"))
}

/// Kernel dimensions of the local patch spaces and atom certification.
/// With a mesh file, every interior-vertex macroelement of that mesh is
/// checked instead of generated fans.
pub(crate) fn kernels(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
) -> Result<(), ExperimentError> {
    let mut rng = StdRng::seed_from_u64(config.seed);
    if let MeshSource::File(_) = config.mesh {
        let mesh = super::base_mesh(config)?;
        report.meshes.push(mesh_info(0, &mesh));
        let sp = npp_space(mesh)?;
        let mesh = sp.mesh();
        for vertex in (0..mesh.num_vertices()).filter(|&x| !mesh.is_boundary_vertex(x)) {
            let mac = mesh
                .extract_macroelement(vertex)
                .map_err(at("macroelement"))?;
            let m = mac.cells.len();
            let patch = Patch::new(format!("vertex {vertex}, m={m}"), mac.cells.clone());
            let r = kernel_dimension(
                &sp,
                &patch,
                Some(Expected::AtMost(m + 1)),
                Some(Expected::Exactly(m)),
            )
            .map_err(at(format!("kernel at vertex {vertex}")))?;
            report.kernels.push(r);
            let atoms =
                macroelement_atoms(&sp, vertex).map_err(at(format!("atoms at vertex {vertex}")))?;
            let dofs = patch.dofs(&sp, true);
            let null = null_space(&sp, &patch, &dofs).map_err(at("null space"))?;
            let refs: Vec<&[f64]> = atoms.iter().map(|a| a.coefficients.as_slice()).collect();
            let residual = span_residual(&null, &refs, &dofs);
            for (k, a) in atoms.iter().enumerate() {
                report.atoms.push(summarize(
                    &sp,
                    a,
                    format!("vertex {vertex}, atom {k}"),
                    residual,
                ));
            }
        }
    } else {
        let t = Instant::now();
        small_patches(&mut rng, report)?;
        report.record("small patches", t);
        let t = Instant::now();
        for m in 3..=8 {
            for s in 0..config.samples {
                let sp = npp_space(random_fan(m, &mut rng))?;
                let mac = sp
                    .mesh()
                    .extract_macroelement(0)
                    .map_err(at("macroelement"))?;
                let patch = Patch::new(format!("fan m={m} #{s}"), mac.cells.clone());
                let r = kernel_dimension(
                    &sp,
                    &patch,
                    Some(Expected::AtMost(m + 1)),
                    Some(Expected::Exactly(m)),
                )
                .map_err(at(format!("kernel m={m}")))?;
                report.kernels.push(r);
            }
        }
        report.record("macroelements", t);
        let t = Instant::now();
        atoms(&mut rng, report)?;
        report.record("atoms", t);
    }
    let failed: Vec<&KernelReport> = report.kernels.iter().filter(|r| !r.passes()).collect();
    report.checks.push(Check::new(
        "kernel dimensions",
        failed.is_empty() && !report.kernels.is_empty(),
        match failed.first() {
            None => format!("{} patches match, spectral gap ≥ 1e3", report.kernels.len()),
            Some(r) => format!(
                "{} of {} fail, first: {} (nullity {})",
                failed.len(),
                report.kernels.len(),
                r.description,
                r.nullity
            ),
        },
    ));
    let bad = report.atoms.iter().filter(|a| !a.passed).count();
    report.checks.push(Check::new(
        "atom functions",
        bad == 0 && !report.atoms.is_empty(),
        format!(
            "{} of {} atoms certified",
            report.atoms.len() - bad,
            report.atoms.len()
        ),
    ));
    Ok(())
}

fn small_patches(rng: &mut StdRng, report: &mut ExperimentReport) -> Result<(), ExperimentError> {
    let sp = npp_space(random_fan(6, rng))?;
    let mac = sp
        .mesh()
        .extract_macroelement(0)
        .map_err(at("macroelement"))?;
    let c = &mac.cells;
    let cases = [
        (Patch::new("two cells", c[..2].to_vec()), 0),
        (
            Patch::new("two cells with free edge", c[..2].to_vec())
                .with_free_edges(vec![mac.edges[2]]),
            2,
        ),
        (Patch::new("open three cells", c[..3].to_vec()), 0),
        (Patch::new("open four-cell fan", c[..4].to_vec()), 1),
    ];
    for (patch, n) in cases {
        let r = kernel_dimension(&sp, &patch, Some(Expected::Exactly(n)), None)
            .map_err(at(patch.description.clone()))?;
        report.kernels.push(r);
    }
    Ok(())
}

fn summarize(
    sp: &VelocitySpace,
    atom: &crate::analysis::AtomFunction,
    description: String,
    span: f64,
) -> AtomSummary {
    let chk = check_atom(sp, atom);
    AtomSummary {
        description,
        divergence: chk.divergence,
        conformity_defect: chk.conformity_defect,
        outside: chk.outside,
        span_residual: span,
        passed: chk.passes(ATOM_TOL) && span <= SPAN_TOL,
    }
}

/// 20 open four-cell chains in random fans and 5 closed triples.
fn atoms(rng: &mut StdRng, report: &mut ExperimentReport) -> Result<(), ExperimentError> {
    for k in 0..20 {
        let m = rng.gen_range(5..=8);
        let sp = npp_space(random_fan(m, rng))?;
        let mac = sp
            .mesh()
            .extract_macroelement(0)
            .map_err(at("macroelement"))?;
        let start = rng.gen_range(0..m);
        let cells: Vec<usize> = (0..4).map(|s| mac.cells[(start + s) % m]).collect();
        let atom = atom_function(&sp, &cells).map_err(at("atom function"))?;
        let patch = Patch::new("chain", cells);
        let dofs = patch.dofs(&sp, false);
        let null = null_space(&sp, &patch, &dofs).map_err(at("null space"))?;
        let span = span_residual(&null, &[&atom.coefficients], &dofs);
        report.atoms.push(summarize(
            &sp,
            &atom,
            format!("open four-cell chain #{k} (m={m})"),
            span,
        ));
    }
    for k in 0..5 {
        let sp = npp_space(random_fan(3, rng))?;
        let mac = sp
            .mesh()
            .extract_macroelement(0)
            .map_err(at("macroelement"))?;
        let atoms = macroelement_atoms(&sp, 0).map_err(at("atom function"))?;
        let patch = Patch::new("triple", mac.cells.clone());
        let dofs = patch.dofs(&sp, true);
        let null = null_space(&sp, &patch, &dofs).map_err(at("null space"))?;
        let refs: Vec<&[f64]> = atoms.iter().map(|a| a.coefficients.as_slice()).collect();
        let span = span_residual(&null, &refs, &dofs);
        for (j, a) in atoms.iter().enumerate() {
            report.atoms.push(summarize(
                &sp,
                a,
                format!("closed triple #{k}, atom {j}"),
                span,
            ));
        }
    }
    Ok(())
}

/// Inf-sup constants on the configured hierarchy and Korn constants with
/// the velocity fixed on the bottom side only.
pub(crate) fn stability(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    report.meshes = meshes
        .iter()
        .enumerate()
        .map(|(l, m)| mesh_info(l, m))
        .collect();
    let korn_side = korn_boundary(&meshes[0]);
    for (l, mesh) in meshes.iter().enumerate() {
        let d = Discretization::new(config.element, mesh, &BoundarySelection::All)?;
        let inf_sup = report.timed(&format!("inf-sup level {l}"), || {
            estimate_inf_sup(&*d.velocity, &*d.pressure, VelocityNorm::Full)
                .map_err(at(format!("inf-sup level {l}")))
        })?;
        let korn = report.timed(
            &format!("korn level {l}"),
            || -> Result<_, ExperimentError> {
                let k = Discretization::new(config.element, mesh, &korn_side)?;
                estimate_korn(&*k.velocity).map_err(at(format!("korn level {l}")))
            },
        )?;
        report.stability.push(StabilityReport {
            mesh: format!("level {l}"),
            h: mesh.mesh_size(),
            inf_sup: Some(inf_sup),
            korn: Some(korn),
        });
    }
    let betas: Vec<f64> = report
        .stability
        .iter()
        .filter_map(|s| s.inf_sup.as_ref().map(|e| e.beta))
        .collect();
    let korns: Vec<f64> = report
        .stability
        .iter()
        .filter_map(|s| s.korn.as_ref().map(|e| e.constant))
        .collect();
    let positive = betas.iter().all(|&b| b > 0.0);
    let drop = match betas.as_slice() {
        [.., a, b] => (a - b) / a,
        _ => 0.0,
    };
    report.checks.push(Check::new(
        "inf-sup positive",
        positive,
        format!("β_h = {betas:.4?}"),
    ));
    report.checks.push(Check::new(
        "inf-sup uniform",
        positive && drop < 0.1,
        format!("relative drop between the last two levels {drop:.3} < 0.1"),
    ));
    let kmax = korns.iter().copied().fold(0.0, f64::max);
    let kmin = korns.iter().copied().fold(f64::INFINITY, f64::min);
    let degradation = if kmax > 0.0 { 1.0 - kmin / kmax } else { 1.0 };
    report.checks.push(Check::new(
        "korn uniform",
        kmin > 0.0 && degradation < 0.2,
        format!("constants {korns:.4?}; degradation {degradation:.3} < 0.2"),
    ));

    // constants in the pressure space give exactly one zero eigenvalue
    if config.element == ElementChoice::Npp {
        let mesh = &meshes[0];
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All)
            .map_err(at("velocity space"))?;
        let full = estimate_inf_sup(
            &v,
            &PressureSpace::new(mesh.clone(), false),
            VelocityNorm::Full,
        )
        .map_err(at("inf-sup with constants"))?;
        let zero = full.lowest.first().copied().unwrap_or(f64::NAN).abs();
        report.checks.push(Check::new(
            "constant pressure mode",
            zero <= 1e-12,
            format!("lowest eigenvalue with constants {zero:.2e} ≤ 1e-12"),
        ));
    }
    Ok(())
}

/// The `bottom` side when the mesh has one, else the first boundary tag.
fn korn_boundary(mesh: &Triangulation) -> BoundarySelection {
    let tags = mesh.boundary_tags();
    let tag = tags
        .iter()
        .find(|t| **t == "bottom")
        .or(tags.first())
        .copied()
        .unwrap_or("bottom");
    BoundarySelection::tags(&[tag])
}
