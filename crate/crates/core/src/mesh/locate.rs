//! Point location through a uniform bucket grid.

use super::{Point, Triangulation};

/// Finds the cell containing a point, with barycentric coordinates.
pub struct PointLocator<'m> {
    mesh: &'m Triangulation,
    origin: Point,
    cell_size: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'m> PointLocator<'m> {
    pub fn new(mesh: &'m Triangulation) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        // about one cell per bucket
        let side = (mesh.num_cells() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell_size = [0, 1].map(|k| ((hi[k] - lo[k]) / side as f64).max(f64::MIN_POSITIVE));
        let mut buckets = vec![Vec::new(); side * side];
        let mut out = Self {
            mesh,
            origin: lo,
            cell_size,
            dims,
            buckets: Vec::new(),
        };
        for c in 0..mesh.num_cells() {
            let pts = mesh.cell_points(c);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                for k in 0..2 {
                    a[k] = a[k].min(p[k]);
                    b[k] = b[k].max(p[k]);
                }
            }
            let (i0, j0) = out.bucket(a);
            let (i1, j1) = out.bucket(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims[0] + i].push(c);
                }
            }
        }
        out.buckets = buckets;
        out
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let idx = |k: usize| {
            let t = ((p[k] - self.origin[k]) / self.cell_size[k]).floor();
            (t.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (idx(0), idx(1))
    }

    /// The first cell whose closure contains `p` (up to a relative
    /// tolerance), or `None` outside the mesh.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.bucket(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &c in &self.buckets[j * self.dims[0] + i] {
            let lambda = self.mesh.cell_geometry(c).barycentric(p);
            let worst = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((c, lambda));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((c, lambda, worst));
            }
        }
        // points on cell boundaries may miss by rounding
        best.filter(|b| b.2 > -1e-10).map(|(c, l, _)| {
            let clipped = l.map(|x| x.max(0.0));
            let s: f64 = clipped.iter().sum();
            (c, clipped.map(|x| x / s))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{forward_step_mesh, structured_square_mesh, DiagonalRule};

    #[test]
    fn every_lattice_point_is_found_inside() {
        let mesh = structured_square_mesh(7, DiagonalRule::Alternating);
        let loc = PointLocator::new(&mesh);
        for i in 0..=20 {
            for j in 0..=20 {
                let p = [i as f64 / 20.0, j as f64 / 20.0];
                let (c, l) = loc.locate(p).expect("inside");
                let back = mesh.cell_geometry(c).to_physical(l);
                assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
                assert!(l.iter().all(|&x| x >= 0.0));
            }
        }
        assert!(loc.locate([1.5, 0.5]).is_none());
    }

    #[test]
    fn holes_are_outside() {
        let mesh = forward_step_mesh(2);
        let loc = PointLocator::new(&mesh);
        assert!(loc.locate([3.0, 0.5]).is_none());
        assert!(loc.locate([3.0, 1.5]).is_some());
        assert!(loc.locate([1.0, 0.5]).is_some());
    }
}
