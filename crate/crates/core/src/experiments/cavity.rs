//! Streamfunction, vorticity and vortex centres of a cavity flow.
//!
//! With `u = (∂ψ/∂y, −∂ψ/∂x)` and `ω = ∂u₂/∂x − ∂u₁/∂y`, the streamfunction
//! solves `−Δψ = ω`, `ψ = 0` on the boundary. It is computed in continuous
//! P2 from the weak form `(∇ψ, ∇φ) = (u_h, curl φ)` with
//! `curl φ = (∂φ/∂y, −∂φ/∂x)`, which needs only the normal continuity of
//! `u_h`. The vorticity is the L² projection of the broken `rot u_h` onto
//! continuous P1.

use serde::{Deserialize, Serialize};

use crate::element::{eval_scalar_p1, eval_scalar_p2, eval_scalar_p2_gradients};
use crate::mesh::{PointLocator, Triangulation};
use crate::quadrature::quadrature_triangle;
use crate::solver::{DirectSolver, SolverError};
use crate::space::VelocityDiscretization;
use crate::sparse::TripletBuilder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexCenter {
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    /// Vorticity at the centre.
    pub vorticity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CavityDiagnostics {
    pub lattice: usize,
    /// Largest `|ψ|` on the lattice.
    pub primary: VortexCenter,
    /// Extremum of opposite sign in the lower-left quarter, if any.
    pub secondary: Option<VortexCenter>,
    pub vorticity_min: f64,
    pub vorticity_max: f64,
    /// `(y, u₁, u₂)` along `x = 1/2`.
    pub vertical_centerline: Vec<[f64; 3]>,
    /// `(x, u₁, u₂)` along `y = 1/2`.
    pub horizontal_centerline: Vec<[f64; 3]>,
}

/// Nodal values: P2 streamfunction (vertices, then edge midpoints) and P1
/// vorticity (vertices).
#[derive(Clone, Debug)]
pub struct CavityFields {
    pub psi: Vec<f64>,
    pub vorticity: Vec<f64>,
}

impl CavityFields {
    pub fn psi_at(&self, mesh: &Triangulation, cell: usize, lambda: [f64; 3]) -> f64 {
        let phi = eval_scalar_p2(lambda);
        p2_nodes(mesh, cell)
            .iter()
            .zip(phi)
            .map(|(&n, f)| self.psi[n] * f)
            .sum()
    }

    pub fn vorticity_at(&self, mesh: &Triangulation, cell: usize, lambda: [f64; 3]) -> f64 {
        let phi = eval_scalar_p1(lambda);
        mesh.cells()[cell]
            .iter()
            .zip(phi)
            .map(|(&n, f)| self.vorticity[n] * f)
            .sum()
    }
}

fn p2_nodes(mesh: &Triangulation, cell: usize) -> [usize; 6] {
    let v = mesh.cells()[cell];
    let e = mesh.cell_edges(cell);
    let nv = mesh.num_vertices();
    [
        v[0],
        v[1],
        v[2],
        nv + e[0].edge,
        nv + e[1].edge,
        nv + e[2].edge,
    ]
}

/// Solves `K x = b` on the nodes not in `fixed` (where `x = 0`).
fn solve_homogeneous(
    n: usize,
    entries: TripletBuilder,
    rhs: &[f64],
    fixed: &[bool],
) -> Result<Vec<f64>, SolverError> {
    let k = entries.build();
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let sub = k.submatrix(&free, &free);
    let b: Vec<f64> = free.iter().map(|&i| rhs[i]).collect();
    let mut solver = DirectSolver::new();
    let (x, rel, _) = solver.factor(&sub)?.solve(&b);
    if !(rel <= 1e-8) {
        return Err(SolverError::Inaccurate(rel));
    }
    let mut out = vec![0.0; n];
    for (k, &i) in free.iter().enumerate() {
        out[i] = x[k];
    }
    Ok(out)
}

pub fn streamfunction(
    v: &(impl VelocityDiscretization + ?Sized),
    u: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let mesh = v.mesh();
    let nv = mesh.num_vertices();
    let n = nv + mesh.num_edges();
    let rule = quadrature_triangle(4).expect("degree 4");
    let mut k = TripletBuilder::with_capacity(n, n, 36 * mesh.num_cells());
    let mut rhs = vec![0.0; n];
    for c in 0..mesh.num_cells() {
        let geom = mesh.cell_geometry(c);
        let nodes = p2_nodes(mesh, c);
        let mut local = [[0.0; 6]; 6];
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let wq = 2.0 * geom.area * w;
            let g = eval_scalar_p2_gradients(&geom, *lambda);
            let uh = v.evaluate(u, c, *lambda);
            for i in 0..6 {
                rhs[nodes[i]] += wq * (uh[0] * g[i][1] - uh[1] * g[i][0]);
                for j in 0..6 {
                    local[i][j] += wq * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                k.push(nodes[i], nodes[j], local[i][j]);
            }
        }
    }
    let mut fixed = vec![false; n];
    for (e, edge) in mesh.edges().iter().enumerate() {
        if edge.is_boundary() {
            fixed[edge.vertices[0]] = true;
            fixed[edge.vertices[1]] = true;
            fixed[nv + e] = true;
        }
    }
    solve_homogeneous(n, k, &rhs, &fixed)
}

pub fn vorticity(
    v: &(impl VelocityDiscretization + ?Sized),
    u: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let mesh = v.mesh();
    let n = mesh.num_vertices();
    let rule = quadrature_triangle(4).expect("degree 4");
    let mut m = TripletBuilder::with_capacity(n, n, 9 * mesh.num_cells());
    let mut rhs = vec![0.0; n];
    for c in 0..mesh.num_cells() {
        let area = mesh.area(c);
        let nodes = mesh.cells()[c];
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let wq = 2.0 * area * w;
            let g = v.evaluate_gradient(u, c, *lambda);
            let rot = g[1][0] - g[0][1];
            let phi = eval_scalar_p1(*lambda);
            for i in 0..3 {
                rhs[nodes[i]] += wq * rot * phi[i];
                for j in 0..3 {
                    m.push(nodes[i], nodes[j], wq * phi[i] * phi[j]);
                }
            }
        }
    }
    solve_homogeneous(n, m, &rhs, &vec![false; n])
}

/// Streamfunction and vorticity plus their extrema on a `lattice x lattice`
/// grid over the unit square and the centreline velocity profiles.
pub fn cavity_diagnostics(
    v: &(impl VelocityDiscretization + ?Sized),
    u: &[f64],
    lattice: usize,
) -> Result<(CavityDiagnostics, CavityFields), SolverError> {
    assert!(lattice >= 2);
    let mesh = v.mesh();
    let fields = CavityFields {
        psi: streamfunction(v, u)?,
        vorticity: vorticity(v, u)?,
    };
    let locator = PointLocator::new(mesh);
    let step = 1.0 / (lattice - 1) as f64;
    let coord = |i: usize| i as f64 * step;

    let mut samples = Vec::with_capacity(lattice * lattice);
    for j in 0..lattice {
        for i in 0..lattice {
            let x = [coord(i), coord(j)];
            if let Some((c, l)) = locator.locate(x) {
                samples.push((
                    x,
                    fields.psi_at(mesh, c, l),
                    fields.vorticity_at(mesh, c, l),
                ));
            }
        }
    }
    let center = |&(x, psi, w): &([f64; 2], f64, f64)| VortexCenter {
        psi,
        x: x[0],
        y: x[1],
        vorticity: w,
    };
    let primary = samples
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(center)
        .expect("the lattice covers the cavity");
    let sign = primary.psi.signum();
    let secondary = samples
        .iter()
        .filter(|s| s.0[0] <= 0.5 && s.0[1] <= 0.5 && s.1 * sign < 0.0)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(center);
    let (vorticity_min, vorticity_max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.2), hi.max(s.2))
        });

    let profile = |at: &dyn Fn(f64) -> [f64; 2]| -> Vec<[f64; 3]> {
        (0..lattice)
            .filter_map(|k| {
                let s = coord(k);
                let (c, l) = locator.locate(at(s))?;
                let w = v.evaluate(u, c, l);
                Some([s, w[0], w[1]])
            })
            .collect()
    };
    let diagnostics = CavityDiagnostics {
        lattice,
        primary,
        secondary,
        vorticity_min,
        vorticity_max,
        vertical_centerline: profile(&|s| [0.5, s]),
        horizontal_centerline: profile(&|s| [s, 0.5]),
    };
    Ok((diagnostics, fields))
}
