//! Global finite element spaces and DOF maps.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::element::{
    dot, edge_moments, eval_scalar_p1, eval_scalar_p2, eval_scalar_p2_gradients, DofKind, Mat2,
    NppElement, Vec2,
};
use crate::mesh::{Point, Triangulation};
use crate::quadrature::{quadrature_edge, EdgeRule};

/// Number of local velocity DOFs for both velocity elements.
pub const LOCAL_VELOCITY: usize = 12;
/// Number of local pressure DOFs for both pressure elements.
pub const LOCAL_PRESSURE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("boundary tag `{0}` does not occur in the mesh")]
    UnknownTag(String),
}

/// Which boundary edges carry essential (Dirichlet) velocity conditions.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum BoundarySelection {
    #[default]
    All,
    None,
    Tags(Vec<String>),
}

impl BoundarySelection {
    pub fn tags<S: AsRef<str>>(tags: &[S]) -> Self {
        Self::Tags(tags.iter().map(|s| s.as_ref().to_string()).collect())
    }

    fn resolve(&self, mesh: &Triangulation) -> Result<Vec<bool>, SpaceError> {
        let present: BTreeSet<&str> = mesh.boundary_tags().into_iter().collect();
        if let Self::Tags(tags) = self {
            if let Some(t) = tags.iter().find(|t| !present.contains(t.as_str())) {
                return Err(SpaceError::UnknownTag(t.clone()));
            }
        }
        Ok(mesh
            .edges()
            .iter()
            .map(|e| match (self, &e.tag) {
                (_, None) => false,
                (Self::All, Some(_)) => true,
                (Self::None, Some(_)) => false,
                (Self::Tags(tags), Some(t)) => tags.iter().any(|s| s == t),
            })
            .collect())
    }

    /// Whether the boundary of the whole domain is selected.
    pub fn covers(&self, mesh: &Triangulation) -> bool {
        match self.resolve(mesh) {
            Ok(mask) => mesh
                .edges()
                .iter()
                .zip(&mask)
                .all(|(e, &m)| !e.is_boundary() || m),
            Err(_) => false,
        }
    }
}

/// Common interface of the two velocity spaces.
pub trait VelocityDiscretization: Sync {
    fn mesh(&self) -> &Triangulation;
    fn num_dofs(&self) -> usize;
    /// `true` for DOFs fixed by the Dirichlet condition.
    fn constrained(&self) -> &[bool];
    /// Global id and sign of each local DOF.
    fn cell_dofs(&self, cell: usize) -> [(usize, f64); LOCAL_VELOCITY];
    fn basis(&self, cell: usize, lambda: [f64; 3]) -> [Vec2; LOCAL_VELOCITY];
    fn basis_gradients(&self, cell: usize, lambda: [f64; 3]) -> [Mat2; LOCAL_VELOCITY];
    /// Canonical interpolant of a continuous field.
    fn interpolate(&self, f: &dyn Fn(Point) -> Vec2) -> Vec<f64>;
    /// Values of the constrained DOFs for boundary data given per tag;
    /// all other entries are zero.
    fn lift(&self, g: &dyn Fn(Point, &str) -> Vec2) -> Vec<f64>;

    fn num_free(&self) -> usize {
        self.constrained().iter().filter(|&&c| !c).count()
    }

    fn free_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs())
            .filter(|&d| !self.constrained()[d])
            .collect()
    }

    fn evaluate(&self, u: &[f64], cell: usize, lambda: [f64; 3]) -> Vec2 {
        let dofs = self.cell_dofs(cell);
        let phi = self.basis(cell, lambda);
        let mut v = [0.0; 2];
        for (&(g, s), p) in dofs.iter().zip(&phi) {
            v[0] += s * u[g] * p[0];
            v[1] += s * u[g] * p[1];
        }
        v
    }

    fn evaluate_gradient(&self, u: &[f64], cell: usize, lambda: [f64; 3]) -> Mat2 {
        let dofs = self.cell_dofs(cell);
        let grads = self.basis_gradients(cell, lambda);
        let mut m = [[0.0; 2]; 2];
        for (&(g, s), gr) in dofs.iter().zip(&grads) {
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += s * u[g] * gr[r][c];
                }
            }
        }
        m
    }

    fn evaluate_divergence(&self, u: &[f64], cell: usize, lambda: [f64; 3]) -> f64 {
        let g = self.evaluate_gradient(u, cell, lambda);
        g[0][0] + g[1][1]
    }
}

/// Common interface of the two pressure spaces.
pub trait PressureDiscretization: Sync {
    fn mesh(&self) -> &Triangulation;
    fn num_dofs(&self) -> usize;
    fn cell_dofs(&self, cell: usize) -> [usize; LOCAL_PRESSURE];
    fn basis(&self, cell: usize, lambda: [f64; 3]) -> [f64; LOCAL_PRESSURE] {
        let _ = cell;
        eval_scalar_p1(lambda)
    }
    /// Whether the mean-zero constraint is imposed at solve time.
    fn mean_zero(&self) -> bool;
    fn interpolate(&self, f: &dyn Fn(Point) -> f64) -> Vec<f64>;

    fn evaluate(&self, p: &[f64], cell: usize, lambda: [f64; 3]) -> f64 {
        let dofs = self.cell_dofs(cell);
        let b = self.basis(cell, lambda);
        dofs.iter().zip(&b).map(|(&d, v)| p[d] * v).sum()
    }
}

/// The new velocity space: four DOFs per edge, edge-major
/// (`4 e + kind`, kinds ordered as [`DofKind::ALL`]).
#[derive(Clone, Debug)]
pub struct VelocitySpace {
    mesh: Arc<Triangulation>,
    elements: Vec<NppElement>,
    constrained: Vec<bool>,
    dirichlet_edges: Vec<bool>,
    edge_rule: EdgeRule,
}

impl VelocitySpace {
    pub fn new(
        mesh: Arc<Triangulation>,
        dirichlet: &BoundarySelection,
    ) -> Result<Self, SpaceError> {
        let dirichlet_edges = dirichlet.resolve(&mesh)?;
        let constrained = dirichlet_edges.iter().flat_map(|&d| [d; 4]).collect();
        let elements = (0..mesh.num_cells())
            .map(|c| NppElement::new(mesh.cell_geometry(c)))
            .collect();
        Ok(Self {
            mesh,
            elements,
            constrained,
            dirichlet_edges,
            edge_rule: quadrature_edge(8).expect("supported degree"),
        })
    }

    pub fn element(&self, cell: usize) -> &NppElement {
        &self.elements[cell]
    }

    pub fn dirichlet_edges(&self) -> &[bool] {
        &self.dirichlet_edges
    }

    pub fn dof(edge: usize, kind: DofKind) -> usize {
        4 * edge + DofKind::ALL.iter().position(|&k| k == kind).expect("kind")
    }

    /// Global moments of `f` on `edge` in the global edge frame.
    pub fn edge_dofs(&self, edge: usize, f: &dyn Fn(Point) -> Vec2) -> [f64; 4] {
        let [a, b] = self.mesh.edges()[edge].vertices;
        edge_moments(
            self.mesh.vertices()[a],
            self.mesh.vertices()[b],
            &f,
            &self.edge_rule,
        )
    }
}

/// Builds the new velocity space with Dirichlet conditions on the selected
/// boundary edges.
pub fn build_velocity_space(
    mesh: Arc<Triangulation>,
    dirichlet: &BoundarySelection,
) -> Result<VelocitySpace, SpaceError> {
    VelocitySpace::new(mesh, dirichlet)
}

/// The (id, sign) pairs of one cell; see [`VelocityDiscretization::cell_dofs`].
pub fn gather_cell_dofs(space: &VelocitySpace, cell: usize) -> [(usize, f64); 12] {
    space.cell_dofs(cell)
}

impl VelocityDiscretization for VelocitySpace {
    fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    fn num_dofs(&self) -> usize {
        4 * self.mesh.num_edges()
    }

    fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    fn cell_dofs(&self, cell: usize) -> [(usize, f64); 12] {
        let local = self.mesh.cell_edges(cell);
        std::array::from_fn(|d| {
            let le = local[d / 4];
            let kind = DofKind::ALL[d % 4];
            (
                4 * le.edge + d % 4,
                if le.agrees { 1.0 } else { kind.flip_sign() },
            )
        })
    }

    fn basis(&self, cell: usize, lambda: [f64; 3]) -> [Vec2; 12] {
        self.elements[cell].values(lambda)
    }

    fn basis_gradients(&self, cell: usize, lambda: [f64; 3]) -> [Mat2; 12] {
        self.elements[cell].gradients(lambda)
    }

    fn interpolate(&self, f: &dyn Fn(Point) -> Vec2) -> Vec<f64> {
        let mut u = vec![0.0; self.num_dofs()];
        for e in 0..self.mesh.num_edges() {
            u[4 * e..4 * e + 4].copy_from_slice(&self.edge_dofs(e, f));
        }
        u
    }

    fn lift(&self, g: &dyn Fn(Point, &str) -> Vec2) -> Vec<f64> {
        let mut u = vec![0.0; self.num_dofs()];
        for (e, edge) in self.mesh.edges().iter().enumerate() {
            if !self.dirichlet_edges[e] {
                continue;
            }
            let tag = edge.tag.as_deref().unwrap_or_default();
            let m = self.edge_dofs(e, &|x| g(x, tag));
            u[4 * e..4 * e + 4].copy_from_slice(&m);
        }
        u
    }
}

/// Discontinuous P1 pressure, three DOFs per cell (`3 c + local vertex`).
#[derive(Clone, Debug)]
pub struct PressureSpace {
    mesh: Arc<Triangulation>,
    mean_zero: bool,
}

impl PressureSpace {
    pub fn new(mesh: Arc<Triangulation>, mean_zero: bool) -> Self {
        Self { mesh, mean_zero }
    }
}

pub fn build_pressure_space(mesh: Arc<Triangulation>, mean_zero: bool) -> PressureSpace {
    PressureSpace::new(mesh, mean_zero)
}

impl PressureDiscretization for PressureSpace {
    fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    fn num_dofs(&self) -> usize {
        3 * self.mesh.num_cells()
    }

    fn cell_dofs(&self, cell: usize) -> [usize; 3] {
        [3 * cell, 3 * cell + 1, 3 * cell + 2]
    }

    fn mean_zero(&self) -> bool {
        self.mean_zero
    }

    fn interpolate(&self, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_dofs());
        for c in 0..self.mesh.num_cells() {
            for x in self.mesh.cell_points(c) {
                p.push(f(x));
            }
        }
        p
    }
}

/// Continuous P2 vector velocity for the Taylor–Hood pair. Scalar node
/// `v` is vertex `v`, node `V + e` the midpoint of edge `e`; component `c`
/// of node `n` is DOF `c N + n` with `N = V + E`.
#[derive(Clone, Debug)]
pub struct TaylorHoodVelocity {
    mesh: Arc<Triangulation>,
    constrained: Vec<bool>,
    dirichlet_edges: Vec<bool>,
}

impl TaylorHoodVelocity {
    pub fn new(
        mesh: Arc<Triangulation>,
        dirichlet: &BoundarySelection,
    ) -> Result<Self, SpaceError> {
        let dirichlet_edges = dirichlet.resolve(&mesh)?;
        let nv = mesh.num_vertices();
        let nodes = nv + mesh.num_edges();
        let mut constrained = vec![false; 2 * nodes];
        for (e, edge) in mesh.edges().iter().enumerate() {
            if dirichlet_edges[e] {
                for n in [edge.vertices[0], edge.vertices[1], nv + e] {
                    constrained[n] = true;
                    constrained[nodes + n] = true;
                }
            }
        }
        Ok(Self {
            mesh,
            constrained,
            dirichlet_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_vertices() + self.mesh.num_edges()
    }

    fn cell_nodes(&self, cell: usize) -> [usize; 6] {
        let v = self.mesh.cells()[cell];
        let e = self.mesh.cell_edges(cell);
        let nv = self.mesh.num_vertices();
        [
            v[0],
            v[1],
            v[2],
            nv + e[0].edge,
            nv + e[1].edge,
            nv + e[2].edge,
        ]
    }

    fn node_point(&self, n: usize) -> Point {
        let nv = self.mesh.num_vertices();
        if n < nv {
            self.mesh.vertices()[n]
        } else {
            self.mesh.edge_midpoint(n - nv)
        }
    }
}

impl VelocityDiscretization for TaylorHoodVelocity {
    fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    fn num_dofs(&self) -> usize {
        2 * self.num_nodes()
    }

    fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Local DOF `6 c + a` is component `c` of local node `a`.
    fn cell_dofs(&self, cell: usize) -> [(usize, f64); 12] {
        let nodes = self.cell_nodes(cell);
        let n = self.num_nodes();
        std::array::from_fn(|d| ((d / 6) * n + nodes[d % 6], 1.0))
    }

    fn basis(&self, _cell: usize, lambda: [f64; 3]) -> [Vec2; 12] {
        let s = eval_scalar_p2(lambda);
        std::array::from_fn(|d| if d < 6 { [s[d], 0.0] } else { [0.0, s[d - 6]] })
    }

    fn basis_gradients(&self, cell: usize, lambda: [f64; 3]) -> [Mat2; 12] {
        let g = eval_scalar_p2_gradients(&self.mesh.cell_geometry(cell), lambda);
        std::array::from_fn(|d| {
            if d < 6 {
                [g[d], [0.0; 2]]
            } else {
                [[0.0; 2], g[d - 6]]
            }
        })
    }

    fn interpolate(&self, f: &dyn Fn(Point) -> Vec2) -> Vec<f64> {
        let n = self.num_nodes();
        let mut u = vec![0.0; 2 * n];
        for k in 0..n {
            let v = f(self.node_point(k));
            u[k] = v[0];
            u[n + k] = v[1];
        }
        u
    }

    /// A vertex shared by Dirichlet edges with different tags takes the
    /// average of the per-edge data.
    fn lift(&self, g: &dyn Fn(Point, &str) -> Vec2) -> Vec<f64> {
        let n = self.num_nodes();
        let nv = self.mesh.num_vertices();
        let mut u = vec![0.0; 2 * n];
        let mut count = vec![0usize; n];
        for (e, edge) in self.mesh.edges().iter().enumerate() {
            if !self.dirichlet_edges[e] {
                continue;
            }
            let tag = edge.tag.as_deref().unwrap_or_default();
            for k in [edge.vertices[0], edge.vertices[1], nv + e] {
                let v = g(self.node_point(k), tag);
                u[k] += v[0];
                u[n + k] += v[1];
                count[k] += 1;
            }
        }
        for k in 0..n {
            if count[k] > 1 {
                u[k] /= count[k] as f64;
                u[n + k] /= count[k] as f64;
            }
        }
        u
    }
}

/// Continuous P1 pressure on vertices.
#[derive(Clone, Debug)]
pub struct TaylorHoodPressure {
    mesh: Arc<Triangulation>,
    mean_zero: bool,
}

impl TaylorHoodPressure {
    pub fn new(mesh: Arc<Triangulation>, mean_zero: bool) -> Self {
        Self { mesh, mean_zero }
    }
}

impl PressureDiscretization for TaylorHoodPressure {
    fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    fn num_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    fn cell_dofs(&self, cell: usize) -> [usize; 3] {
        self.mesh.cells()[cell]
    }

    fn mean_zero(&self) -> bool {
        self.mean_zero
    }

    fn interpolate(&self, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
        self.mesh.vertices().iter().map(|&x| f(x)).collect()
    }
}

/// The Taylor–Hood pair on one mesh.
#[derive(Clone, Debug)]
pub struct TaylorHoodSpace {
    pub velocity: TaylorHoodVelocity,
    pub pressure: TaylorHoodPressure,
}

impl TaylorHoodSpace {
    pub fn new(
        mesh: Arc<Triangulation>,
        dirichlet: &BoundarySelection,
        mean_zero: bool,
    ) -> Result<Self, SpaceError> {
        Ok(Self {
            velocity: TaylorHoodVelocity::new(mesh.clone(), dirichlet)?,
            pressure: TaylorHoodPressure::new(mesh, mean_zero),
        })
    }
}

/// Normal and tangential components of a velocity field on edge `e` as
/// seen from `cell`, in the global edge frame, at parameter `s` of the
/// global edge direction.
pub fn edge_trace(
    space: &dyn VelocityDiscretization,
    u: &[f64],
    cell: usize,
    edge: usize,
    s: f64,
) -> (f64, f64) {
    let mesh = space.mesh();
    let [a, b] = mesh.edges()[edge].vertices;
    let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
    let x = [(1.0 - s) * p[0] + s * q[0], (1.0 - s) * p[1] + s * q[1]];
    let lambda = mesh.cell_geometry(cell).barycentric(x);
    let v = space.evaluate(u, cell, lambda);
    let (n, t) = mesh.edge_frame(edge);
    (dot(v, n), dot(v, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_square_mesh, DiagonalRule, Triangulation};
    use crate::quadrature::quadrature_triangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single() -> Arc<Triangulation> {
        Arc::new(
            Triangulation::new(
                vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                vec![[0, 1, 2]],
                &[],
            )
            .unwrap(),
        )
    }

    fn perturbed(n: usize, rule: DiagonalRule, seed: u64) -> Arc<Triangulation> {
        let mesh = structured_square_mesh(n, rule);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1.0 / n as f64;
        let shifts: Vec<Point> = (0..mesh.num_vertices())
            .map(|v| {
                if mesh.is_boundary_vertex(v) {
                    [0.0, 0.0]
                } else {
                    [
                        rng.gen_range(-0.15..0.15) * h,
                        rng.gen_range(-0.15..0.15) * h,
                    ]
                }
            })
            .collect();
        let pts: Vec<Point> = mesh.vertices().to_vec();
        let moved: Vec<Point> = pts
            .iter()
            .zip(&shifts)
            .map(|(p, s)| [p[0] + s[0], p[1] + s[1]])
            .collect();
        let lookup = move |p: Point| {
            let i = pts.iter().position(|q| q == &p).unwrap();
            moved[i]
        };
        Arc::new(mesh.map_vertices(lookup))
    }

    #[test]
    fn dimensions() {
        let two = Arc::new(structured_square_mesh(1, DiagonalRule::Same));
        let v = VelocitySpace::new(two.clone(), &BoundarySelection::All).unwrap();
        assert_eq!((v.num_dofs(), v.num_free()), (20, 4));
        let v = VelocitySpace::new(single(), &BoundarySelection::All).unwrap();
        assert_eq!(v.num_free(), 0);
        let cc = Arc::new(structured_square_mesh(1, DiagonalRule::CrissCross));
        let v = VelocitySpace::new(cc.clone(), &BoundarySelection::All).unwrap();
        assert_eq!(v.num_free(), 16);
        assert_eq!(PressureSpace::new(two, false).num_dofs(), 6);
        let p = PressureSpace::new(cc.clone(), true);
        assert_eq!(p.num_dofs(), 12);
        assert!(p.mean_zero());
        assert_eq!(
            VelocitySpace::new(cc.clone(), &BoundarySelection::tags(&["nowhere"])).unwrap_err(),
            SpaceError::UnknownTag("nowhere".into())
        );
        let left = VelocitySpace::new(cc.clone(), &BoundarySelection::tags(&["left"])).unwrap();
        assert_eq!(left.num_free(), 4 * 7);
        let th = TaylorHoodSpace::new(cc.clone(), &BoundarySelection::All, true).unwrap();
        assert_eq!(th.velocity.num_dofs(), 2 * (5 + 8));
        assert_eq!(th.pressure.num_dofs(), 5);
        assert_eq!(th.velocity.num_free(), 10);
    }

    #[test]
    fn gather_signs() {
        let two = Arc::new(structured_square_mesh(1, DiagonalRule::Same));
        let v = VelocitySpace::new(two.clone(), &BoundarySelection::All).unwrap();
        let e = (0..two.num_edges())
            .find(|&e| !two.edges()[e].is_boundary())
            .unwrap();
        let (c1, c2) = two.edges()[e].cells;
        let c2 = c2.unwrap();
        assert!(c1 < c2);
        let d1 = v.cell_dofs(c1);
        let d2 = v.cell_dofs(c2);
        let shared1: Vec<_> = d1.iter().filter(|(g, _)| g / 4 == e).collect();
        let shared2: Vec<_> = d2.iter().filter(|(g, _)| g / 4 == e).collect();
        assert!(shared1.iter().all(|(_, s)| *s == 1.0));
        let signs: Vec<f64> = shared2.iter().map(|(_, s)| *s).collect();
        assert_eq!(signs, vec![-1.0, 1.0, -1.0, -1.0]);
        for c in [c1, c2] {
            for (d, (g, s)) in v.cell_dofs(c).iter().enumerate() {
                if two.edges()[g / 4].is_boundary() {
                    assert_eq!(*s, 1.0, "cell {c} local {d}");
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let mesh = perturbed(3, DiagonalRule::CrissCross, 7);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let f = |x: Point| [x[0] * x[0] - 0.3 * x[1], x[0] * x[1] + 2.0];
        let u = v.interpolate(&f);
        let rule = quadrature_triangle(6).unwrap();
        for c in 0..mesh.num_cells() {
            let g = mesh.cell_geometry(c);
            for lam in &rule.points {
                let val = v.evaluate(&u, c, *lam);
                let exact = f(g.to_physical(*lam));
                assert!((val[0] - exact[0]).abs() < 1e-11 && (val[1] - exact[1]).abs() < 1e-11);
            }
        }
        let z = v.interpolate(&|_| [0.0, 0.0]);
        assert!(z.iter().all(|&x| x == 0.0));
        let th = TaylorHoodVelocity::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let u = th.interpolate(&f);
        for c in 0..mesh.num_cells() {
            let g = mesh.cell_geometry(c);
            let val = th.evaluate(&u, c, [0.2, 0.3, 0.5]);
            let exact = f(g.to_physical([0.2, 0.3, 0.5]));
            assert!((val[0] - exact[0]).abs() < 1e-12 && (val[1] - exact[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn conformity_for_random_coefficients() {
        let mesh = perturbed(3, DiagonalRule::Alternating, 11);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut u: Vec<f64> = (0..v.num_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let rule = quadrature_edge(5).unwrap();
        for (e, edge) in mesh.edges().iter().enumerate() {
            if let (c1, Some(c2)) = edge.cells {
                let mut tangential_jump = 0.0;
                for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                    let (n1, t1) = edge_trace(&v, &u, c1, e, s);
                    let (n2, t2) = edge_trace(&v, &u, c2, e, s);
                    assert!((n1 - n2).abs() < 1e-11, "normal jump on edge {e}");
                    tangential_jump += w * (t1 - t2);
                }
                assert!(tangential_jump.abs() < 1e-11);
            }
        }
        // Dirichlet trace after masking
        for (d, &c) in v.constrained().iter().enumerate() {
            if c {
                u[d] = 0.0;
            }
        }
        for (e, edge) in mesh.edges().iter().enumerate() {
            if edge.is_boundary() {
                let mut mean_t = 0.0;
                for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                    let (n, t) = edge_trace(&v, &u, edge.cells.0, e, s);
                    assert!(n.abs() < 1e-12);
                    mean_t += w * t;
                }
                assert!(mean_t.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_field_and_zero() {
        let mesh = perturbed(2, DiagonalRule::CrissCross, 3);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let f = |x: Point| [x[1], -x[0]];
        let u = v.interpolate(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let c = rng.gen_range(0..mesh.num_cells());
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let lam = if a + b > 1.0 {
                [a + b - 1.0, 1.0 - a, 1.0 - b]
            } else {
                [1.0 - a - b, a, b]
            };
            let val = v.evaluate(&u, c, lam);
            let exact = f(mesh.cell_geometry(c).to_physical(lam));
            assert!((val[0] - exact[0]).abs() < 1e-11 && (val[1] - exact[1]).abs() < 1e-11);
            let z = v.evaluate(&vec![0.0; v.num_dofs()], c, lam);
            assert_eq!(z, [0.0, 0.0]);
            // linear field is divergence free
            assert!(v.evaluate_divergence(&u, c, lam).abs() < 1e-10);
        }
    }

    #[test]
    fn lift_uses_edge_tags() {
        let mesh = Arc::new(structured_square_mesh(2, DiagonalRule::Same));
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let u = v.lift(&|_, tag| {
            if tag == "top" {
                [-1.0, 0.0]
            } else {
                [0.0, 0.0]
            }
        });
        for (e, edge) in mesh.edges().iter().enumerate() {
            let (n, t) = mesh.edge_frame(e);
            let expected = if edge.tag.as_deref() == Some("top") {
                [dot([-1.0, 0.0], n), dot([-1.0, 0.0], t)]
            } else {
                [0.0, 0.0]
            };
            assert!((u[4 * e] - expected[0]).abs() < 1e-14);
            assert!((u[4 * e + 3] - expected[1]).abs() < 1e-14);
            assert!(u[4 * e + 1].abs() < 1e-14 && u[4 * e + 2].abs() < 1e-14);
        }
    }
}
