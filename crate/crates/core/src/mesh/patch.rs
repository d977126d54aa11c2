//! Vertex-centred macroelements and chains of adjacent cells.

use super::{MeshError, Triangulation};

/// The fan of `m` cells around one interior vertex.
///
/// `cells[s]` and `cells[s + 1]` share `edges[s + 1]`; the sequence closes
/// cyclically, so `edges[0]` is shared by the last and the first cell.
/// Cells are ordered counter-clockwise around the centre.
#[derive(Clone, Debug, PartialEq)]
pub struct Macroelement {
    pub center: usize,
    pub cells: Vec<usize>,
    pub edges: Vec<usize>,
    pub edge_lengths: Vec<f64>,
    pub areas: Vec<f64>,
}

impl Macroelement {
    pub fn size(&self) -> usize {
        self.cells.len()
    }
}

/// An ordered run of cells where consecutive cells share an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPatch {
    pub cells: Vec<usize>,
    /// `interior_edges[s]` is shared by `cells[s]` and `cells[s + 1]`.
    pub interior_edges: Vec<usize>,
    /// Edge shared by the last and the first cell, when they are adjacent.
    pub closing_edge: Option<usize>,
}

impl ChainPatch {
    pub fn is_closed(&self) -> bool {
        self.closing_edge.is_some()
    }

    /// All interior edges, including the closing one.
    pub fn all_interior_edges(&self) -> Vec<usize> {
        let mut edges = self.interior_edges.clone();
        edges.extend(self.closing_edge);
        edges
    }
}

impl Triangulation {
    pub fn extract_macroelement(&self, vertex: usize) -> Result<Macroelement, MeshError> {
        if vertex >= self.num_vertices() || self.is_boundary_vertex(vertex) {
            return Err(MeshError::BoundaryVertex { vertex });
        }
        let fan = self.cells_around_vertex(vertex);
        let m = fan.len();
        let mut cells = Vec::with_capacity(m);
        let mut edges = Vec::with_capacity(m);
        let mut current = fan[0];
        for _ in 0..m {
            cells.push(current);
            let cell = self.cells()[current];
            let p = cell
                .iter()
                .position(|&v| v == vertex)
                .expect("cell contains centre");
            // the side (centre, next-next vertex) leads counter-clockwise
            let leading = cell[(p + 2) % 3];
            let local = (p + 1) % 3;
            let edge = self.cell_edges(current)[local].edge;
            debug_assert!(self.edges()[edge].vertices.contains(&leading));
            let next = self.cell_neighbors(current)[local]
                .expect("edges at an interior vertex are interior");
            edges.push(edge);
            current = next;
        }
        debug_assert_eq!(current, cells[0]);
        // edges[s] currently sits between cells[s] and cells[s+1]; rotate so
        // that edges[s] sits between cells[s-1] and cells[s].
        edges.rotate_right(1);
        let edge_lengths = edges.iter().map(|&e| self.edge_length(e)).collect();
        let areas = cells.iter().map(|&c| self.area(c)).collect();
        Ok(Macroelement {
            center: vertex,
            cells,
            edges,
            edge_lengths,
            areas,
        })
    }

    pub fn extract_chain_patch(&self, cells: &[usize]) -> Result<ChainPatch, MeshError> {
        if cells.len() < 2 {
            return Err(MeshError::PatchTooSmall {
                min: 2,
                got: cells.len(),
            });
        }
        for &c in cells {
            if c >= self.num_cells() {
                return Err(MeshError::InvalidCell { cell: c });
            }
        }
        let mut interior_edges = Vec::with_capacity(cells.len() - 1);
        for pair in cells.windows(2) {
            let e = self
                .shared_edge(pair[0], pair[1])
                .ok_or(MeshError::NotAdjacent {
                    first: pair[0],
                    second: pair[1],
                })?;
            interior_edges.push(e);
        }
        let closing_edge = if cells.len() >= 3 {
            self.shared_edge(cells[cells.len() - 1], cells[0])
        } else {
            None
        };
        Ok(ChainPatch {
            cells: cells.to_vec(),
            interior_edges,
            closing_edge,
        })
    }
}
