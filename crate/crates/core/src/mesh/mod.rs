//! Conforming triangulations of polygonal domains.
//!
//! Cells are stored counter-clockwise. Every edge carries a global
//! orientation: the tangent `t_e` runs from `vertices[0]` to `vertices[1]`
//! and the normal `n_e` is `t_e` rotated by -90 degrees, so that
//! `n_e x t_e > 0`. Edges are oriented along the counter-clockwise traversal
//! of their lowest-index incident cell, which makes `n_e` point from the
//! lower-index cell into the higher-index one and outward on the boundary.

mod generators;
pub mod io;
mod locate;
mod patch;

pub use generators::{
    forward_step_mesh, random_fan, structured_rectangle_mesh, structured_square_mesh, DiagonalRule,
};
pub use locate::PointLocator;
pub use patch::{ChainPatch, Macroelement};

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use thiserror::Error;

/// A point in the plane.
pub type Point = [f64; 2];

/// Tag given to boundary edges that were not labelled explicitly.
pub const DEFAULT_BOUNDARY_TAG: &str = "dirichlet";

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("cell {cell} references vertex {vertex}, but the mesh has {count} vertices")]
    InvalidVertex {
        cell: usize,
        vertex: usize,
        count: usize,
    },
    #[error("cell {cell} repeats a vertex")]
    RepeatedVertex { cell: usize },
    #[error("cells {first} and {second} are identical")]
    DuplicateCell { first: usize, second: usize },
    #[error("cell {cell} is degenerate (signed area {area:e})")]
    DegenerateCell { cell: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by more than two cells")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) is traversed in the same direction by two cells (folded mesh)")]
    FoldedEdge { a: usize, b: usize },
    #[error("vertex {vertex} is not used by any cell")]
    DanglingVertex { vertex: usize },
    #[error("the mesh is not connected")]
    Disconnected,
    #[error("the mesh has no cells")]
    Empty,
    #[error("segment ({a}, {b}) is not a boundary edge")]
    NotBoundaryEdge { a: usize, b: usize },
    #[error("vertex {vertex} lies on the boundary")]
    BoundaryVertex { vertex: usize },
    #[error("cell {cell} is out of range")]
    InvalidCell { cell: usize },
    #[error("cells {first} and {second} do not share an edge")]
    NotAdjacent { first: usize, second: usize },
    #[error("a patch needs at least {min} cells, got {got}")]
    PatchTooSmall { min: usize, got: usize },
}

/// A globally oriented edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Start and end vertex; the global tangent runs start -> end.
    pub vertices: [usize; 2],
    /// Lower-index incident cell first.
    pub cells: (usize, Option<usize>),
    /// Boundary label, `None` for interior edges.
    pub tag: Option<String>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Local edge `i` of a cell is the side opposite local vertex `i`,
/// traversed from local vertex `i + 1` to `i + 2` (mod 3).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalEdge {
    pub edge: usize,
    /// Whether the cell's counter-clockwise traversal matches the global
    /// edge direction.
    pub agrees: bool,
}

#[derive(Clone, Debug)]
pub struct Triangulation {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    cell_edges: Vec<[LocalEdge; 3]>,
    on_boundary: Vec<bool>,
}

fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

impl Triangulation {
    /// Builds the edge table and adjacency. Cells given clockwise are
    /// reordered; `boundary` labels boundary segments by their endpoints,
    /// unlabelled boundary edges get [`DEFAULT_BOUNDARY_TAG`].
    pub fn new(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        boundary: &[(usize, usize, String)],
    ) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        let mut cells = cells;
        let mut seen = HashMap::new();
        for (c, cell) in cells.iter_mut().enumerate() {
            for &v in cell.iter() {
                if v >= nv {
                    return Err(MeshError::InvalidVertex {
                        cell: c,
                        vertex: v,
                        count: nv,
                    });
                }
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(MeshError::RepeatedVertex { cell: c });
            }
            let mut key = *cell;
            key.sort_unstable();
            if let Some(&first) = seen.get(&key) {
                return Err(MeshError::DuplicateCell { first, second: c });
            }
            seen.insert(key, c);

            let [a, b, d] = *cell;
            let area = signed_area(vertices[a], vertices[b], vertices[d]);
            let scale = [a, b, d]
                .iter()
                .flat_map(|&v| vertices[v].iter().map(|x| x.abs()))
                .fold(1e-300_f64, f64::max);
            if area.abs() <= 1e-14 * scale * scale || !area.is_finite() {
                return Err(MeshError::DegenerateCell { cell: c, area });
            }
            if area < 0.0 {
                cell.swap(1, 2);
            }
        }

        let mut used = vec![false; nv];
        for cell in &cells {
            for &v in cell {
                used[v] = true;
            }
        }
        if let Some(vertex) = used.iter().position(|u| !u) {
            return Err(MeshError::DanglingVertex { vertex });
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut local = [LocalEdge {
                edge: 0,
                agrees: true,
            }; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let a = cell[(i + 1) % 3];
                let b = cell[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, edges.len());
                        *slot = LocalEdge {
                            edge: edges.len(),
                            agrees: true,
                        };
                        edges.push(Edge {
                            vertices: [a, b],
                            cells: (c, None),
                            tag: None,
                        });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.cells.1.is_some() {
                            return Err(MeshError::NonManifoldEdge { a: key.0, b: key.1 });
                        }
                        if edge.vertices[0] == a {
                            return Err(MeshError::FoldedEdge { a: key.0, b: key.1 });
                        }
                        edge.cells.1 = Some(c);
                        *slot = LocalEdge {
                            edge: e,
                            agrees: false,
                        };
                    }
                }
            }
            cell_edges.push(local);
        }

        let mut on_boundary = vec![false; nv];
        for edge in edges.iter_mut().filter(|e| e.cells.1.is_none()) {
            edge.tag = Some(DEFAULT_BOUNDARY_TAG.to_string());
            on_boundary[edge.vertices[0]] = true;
            on_boundary[edge.vertices[1]] = true;
        }
        for (a, b, tag) in boundary {
            let key = ((*a).min(*b), (*a).max(*b));
            match lookup.get(&key) {
                Some(&e) if edges[e].is_boundary() => edges[e].tag = Some(tag.clone()),
                _ => return Err(MeshError::NotBoundaryEdge { a: *a, b: *b }),
            }
        }

        let mesh = Self {
            vertices,
            cells,
            edges,
            cell_edges,
            on_boundary,
        };
        if !mesh.is_connected() {
            return Err(MeshError::Disconnected);
        }
        Ok(mesh)
    }

    fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.cell_neighbors(c).into_iter().flatten() {
                if !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        visited.iter().all(|&v| v)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary()).count()
    }

    pub fn cell_edges(&self, cell: usize) -> &[LocalEdge; 3] {
        &self.cell_edges[cell]
    }

    pub fn cell_points(&self, cell: usize) -> [Point; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    /// Neighbour across each local edge.
    pub fn cell_neighbors(&self, cell: usize) -> [Option<usize>; 3] {
        self.cell_edges[cell].map(|le| {
            let (a, b) = self.edges[le.edge].cells;
            if a == cell {
                b
            } else {
                Some(a)
            }
        })
    }

    pub fn area(&self, cell: usize) -> f64 {
        let [p, q, r] = self.cell_points(cell);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.area(c)).sum()
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point {
        let [a, b] = self.edges[edge].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Global unit normal and tangent of an edge.
    pub fn edge_frame(&self, edge: usize) -> (Point, Point) {
        let [a, b] = self.edges[edge].vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let l = self.edge_length(edge);
        let t = [(q[0] - p[0]) / l, (q[1] - p[1]) / l];
        ([t[1], -t[0]], t)
    }

    /// Largest edge length.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_edges())
            .map(|e| self.edge_length(e))
            .fold(0.0, f64::max)
    }

    pub fn boundary_tags(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = self.edges.iter().filter_map(|e| e.tag.as_deref()).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    /// Cells whose three vertices all lie on the boundary.
    pub fn assumption_a_violations(&self) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&c| self.cells[c].iter().all(|&v| self.on_boundary[v]))
            .collect()
    }

    pub fn cells_around_vertex(&self, vertex: usize) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&c| self.cells[c].contains(&vertex))
            .collect()
    }

    /// Edge shared by two cells, if any.
    pub fn shared_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.cell_edges[a]
            .iter()
            .map(|le| le.edge)
            .find(|e| self.cell_edges[b].iter().any(|le| le.edge == *e))
    }

    /// Red refinement: every cell is split into four through its edge
    /// midpoints. Boundary tags are inherited by the child edges.
    pub fn refine_uniform(&self) -> Self {
        let nv = self.num_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend((0..self.num_edges()).map(|e| self.edge_midpoint(e)));
        let mut cells = Vec::with_capacity(4 * self.num_cells());
        for (c, cell) in self.cells.iter().enumerate() {
            let m = self.cell_edges[c].map(|le| nv + le.edge);
            let [a, b, d] = *cell;
            cells.push([a, m[2], m[1]]);
            cells.push([m[2], b, m[0]]);
            cells.push([m[1], m[0], d]);
            cells.push([m[0], m[1], m[2]]);
        }
        let mut boundary = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if let Some(tag) = &edge.tag {
                let [a, b] = edge.vertices;
                boundary.push((a, nv + e, tag.clone()));
                boundary.push((nv + e, b, tag.clone()));
            }
        }
        Self::new(vertices, cells, &boundary).expect("refinement of a valid mesh is valid")
    }

    /// Extracts the cells `cells` as a standalone triangulation. Edges on
    /// the patch boundary that were interior in `self` get the default tag;
    /// original boundary tags are kept.
    pub fn submesh(&self, cells: &[usize]) -> Result<(Self, Vec<usize>), MeshError> {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in cells {
            if c >= self.num_cells() {
                return Err(MeshError::InvalidCell { cell: c });
            }
            for &v in &self.cells[c] {
                let next = map.len();
                map.entry(v).or_insert(next);
            }
        }
        let mut vertex_of = vec![0; map.len()];
        for (&g, &l) in &map {
            vertex_of[l] = g;
        }
        let vertices = vertex_of.iter().map(|&g| self.vertices[g]).collect();
        let local_cells = cells
            .iter()
            .map(|&c| self.cells[c].map(|v| map[&v]))
            .collect();
        let chosen: HashSet<usize> = cells.iter().copied().collect();
        let mut boundary = Vec::new();
        for &c in cells {
            for le in &self.cell_edges[c] {
                let edge = &self.edges[le.edge];
                if let Some(tag) = &edge.tag {
                    let [a, b] = edge.vertices;
                    boundary.push((map[&a], map[&b], tag.clone()));
                } else {
                    let (x, y) = edge.cells;
                    let y = y.expect("interior edge");
                    if !(chosen.contains(&x) && chosen.contains(&y)) {
                        let [a, b] = edge.vertices;
                        boundary.push((map[&a], map[&b], DEFAULT_BOUNDARY_TAG.to_string()));
                    }
                }
            }
        }
        Ok((Self::new(vertices, local_cells, &boundary)?, vertex_of))
    }

    /// Applies `f` to every vertex coordinate and rebuilds the mesh, so
    /// orientation-reversing maps are handled too.
    pub fn map_vertices(&self, f: impl Fn(Point) -> Point) -> Self {
        let vertices = self.vertices.iter().map(|&p| f(p)).collect();
        let boundary: Vec<_> = self
            .tagged_boundary()
            .into_iter()
            .map(|(a, b, t)| (a, b, t.to_string()))
            .collect();
        Self::new(vertices, self.cells.clone(), &boundary).expect("mapped mesh is valid")
    }

    /// Index of the edge joining two vertices.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.vertices == [a, b] || e.vertices == [b, a])
    }

    /// Vertex/edge/cell counts as (V, E, C).
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.num_vertices(), self.num_edges(), self.num_cells())
    }

    /// Boundary segments with tags in a stable order, as used by the mesh
    /// file writer.
    pub fn tagged_boundary(&self) -> Vec<(usize, usize, &str)> {
        self.edges
            .iter()
            .filter_map(|e| e.tag.as_deref().map(|t| (e.vertices[0], e.vertices[1], t)))
            .collect()
    }
}

/// Builds a triangulation; see [`Triangulation::new`].
pub fn build_triangulation(
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary: &[(usize, usize, String)],
) -> Result<Triangulation, MeshError> {
    Triangulation::new(vertices, cells, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Triangulation {
        Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn single_cell_counts() {
        let t = reference();
        assert_eq!(t.num_edges(), 3);
        assert_eq!(t.num_interior_edges(), 0);
        assert_eq!(t.assumption_a_violations(), vec![0]);
    }

    #[test]
    fn two_cell_square() {
        let t = structured_square_mesh(1, DiagonalRule::Same);
        assert_eq!(t.num_cells(), 2);
        assert_eq!(t.num_edges(), 5);
        assert_eq!(t.num_interior_edges(), 1);
        assert_eq!(t.assumption_a_violations(), vec![0, 1]);
    }

    #[test]
    fn criss_cross_square() {
        let t = structured_square_mesh(1, DiagonalRule::CrissCross);
        assert_eq!(t.num_cells(), 4);
        assert_eq!(t.num_edges(), 8);
        assert_eq!(t.num_interior_edges(), 4);
        assert!(t.assumption_a_violations().is_empty());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let t = Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 2, 1]],
            &[],
        )
        .unwrap();
        assert!(t.area(0) > 0.0);
        assert!((t.area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let err = Triangulation::new(pts.clone(), vec![[0, 1, 2], [1, 3, 2]], &[]).unwrap_err();
        assert_eq!(err, MeshError::DanglingVertex { vertex: 4 });

        let pts = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let err = Triangulation::new(pts, vec![[0, 1, 2]], &[]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateCell { .. }));

        // three cells on one edge
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]];
        let err = Triangulation::new(pts, vec![[0, 1, 2], [0, 3, 1], [0, 1, 4]], &[]).unwrap_err();
        assert!(matches!(
            err,
            MeshError::NonManifoldEdge { .. } | MeshError::FoldedEdge { .. }
        ));

        let err = Triangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 3]],
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::InvalidVertex { .. }));
    }

    #[test]
    fn edge_orientation_convention() {
        let t = structured_square_mesh(3, DiagonalRule::CrissCross);
        for (e, edge) in t.edges().iter().enumerate() {
            let (n, tg) = t.edge_frame(e);
            assert!(n[0] * tg[1] - n[1] * tg[0] > 0.0);
            let (c0, c1) = edge.cells;
            let centroid = |c: usize| {
                let p = t.cell_points(c);
                [
                    (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                    (p[0][1] + p[1][1] + p[2][1]) / 3.0,
                ]
            };
            let m = t.edge_midpoint(e);
            let g0 = centroid(c0);
            // normal points away from the lower-index cell
            assert!(n[0] * (m[0] - g0[0]) + n[1] * (m[1] - g0[1]) > 0.0);
            if let Some(c1) = c1 {
                assert!(c0 < c1);
                let g1 = centroid(c1);
                assert!(n[0] * (g1[0] - m[0]) + n[1] * (g1[1] - m[1]) > 0.0);
            }
        }
    }

    #[test]
    fn refinement_counts_and_size() {
        let t = reference();
        let r = t.refine_uniform();
        assert_eq!(r.num_cells(), 4);
        assert_eq!(r.num_edges(), 9);
        assert!((r.mesh_size() - 0.5 * t.mesh_size()).abs() < 1e-15);
    }

    #[test]
    fn refinement_inherits_tags() {
        let t = structured_square_mesh(2, DiagonalRule::Alternating);
        let r = t.refine_uniform();
        for e in 0..r.num_edges() {
            if let Some(tag) = &r.edges()[e].tag {
                let m = r.edge_midpoint(e);
                let expected = if m[1] < 1e-12 {
                    "bottom"
                } else if m[0] > 1.0 - 1e-12 {
                    "right"
                } else if m[1] > 1.0 - 1e-12 {
                    "top"
                } else {
                    "left"
                };
                assert_eq!(tag, expected);
            }
        }
    }

    #[test]
    fn euler_relation_on_generators() {
        let meshes = [
            structured_square_mesh(4, DiagonalRule::Same),
            structured_square_mesh(3, DiagonalRule::Alternating),
            structured_square_mesh(2, DiagonalRule::CrissCross).refine_uniform(),
            forward_step_mesh(2),
        ];
        for t in &meshes {
            let (v, e, c) = t.counts();
            assert_eq!(v as i64 - e as i64 + c as i64, 1);
        }
    }

    #[test]
    fn refinement_keeps_assumption_a_on_criss_cross() {
        let mut t = structured_square_mesh(2, DiagonalRule::CrissCross);
        for _ in 0..2 {
            t = t.refine_uniform();
            assert!(t.assumption_a_violations().is_empty());
        }
    }

    #[test]
    fn midpoints_of_interior_edges_are_interior_after_refinement() {
        let t = structured_square_mesh(2, DiagonalRule::Same);
        let r = t.refine_uniform();
        let nv = t.num_vertices();
        for (e, edge) in t.edges().iter().enumerate() {
            assert_eq!(r.is_boundary_vertex(nv + e), edge.is_boundary());
        }
        // every violating child lies inside a violating parent
        let parents: Vec<usize> = r.assumption_a_violations().iter().map(|c| c / 4).collect();
        let bad = t.assumption_a_violations();
        assert!(parents.iter().all(|p| bad.contains(p)));
    }

    #[test]
    fn submesh_keeps_geometry() {
        let t = structured_square_mesh(2, DiagonalRule::CrissCross);
        let (s, map) = t.submesh(&[0, 1, 2, 3]).unwrap();
        assert_eq!(s.num_cells(), 4);
        assert_eq!(s.num_interior_edges(), 4);
        for (l, &g) in map.iter().enumerate() {
            assert_eq!(s.vertices()[l], t.vertices()[g]);
        }
    }
}
