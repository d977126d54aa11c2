//! Divergence-free functions on small patches: numeric kernel dimensions,
//! the single-cell bases `w_T` and the atom functions built from them.

use std::collections::HashSet;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::dense::singular_values;
use super::AnalysisError;
use crate::element::{CellGeometry, DofKind};
use crate::quadrature::quadrature_triangle;
use crate::space::{VelocityDiscretization, VelocitySpace};

/// Relative threshold below which a singular value counts as zero.
pub const NULL_THRESHOLD: f64 = 1e-9;
/// Required ratio between the smallest kept and largest dropped value.
pub const REQUIRED_GAP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Expected {
    Exactly(usize),
    AtMost(usize),
}

impl Expected {
    pub fn admits(self, n: usize) -> bool {
        match self {
            Self::Exactly(k) => n == k,
            Self::AtMost(k) => n <= k,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelReport {
    pub description: String,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub nullity: usize,
    pub expected: Option<Expected>,
    /// Nullity with the interior normal means also fixed to zero.
    pub zn_nullity: Option<usize>,
    pub zn_expected: Option<Expected>,
    /// Smallest singular values relative to the largest, ascending.
    pub spectrum_tail: Vec<f64>,
    /// Smallest kept over largest dropped singular value.
    pub gap: f64,
    /// Nullity unchanged for thresholds 1e-10 and 1e-8.
    pub threshold_stable: bool,
}

impl KernelReport {
    pub fn conclusive(&self) -> bool {
        self.gap >= REQUIRED_GAP && self.threshold_stable
    }

    pub fn passes(&self) -> bool {
        self.conclusive()
            && self.expected.map_or(true, |e| e.admits(self.nullity))
            && match (self.zn_expected, self.zn_nullity) {
                (Some(e), Some(n)) => e.admits(n),
                (Some(_), None) => false,
                _ => true,
            }
    }
}

/// A set of cells with the patch-local velocity space: DOFs on edges
/// interior to the patch plus those on `free_edges`; all other DOFs vanish.
#[derive(Clone, Debug)]
pub struct Patch {
    pub description: String,
    pub cells: Vec<usize>,
    pub free_edges: Vec<usize>,
}

impl Patch {
    pub fn new(description: impl Into<String>, cells: Vec<usize>) -> Self {
        Self {
            description: description.into(),
            cells,
            free_edges: Vec::new(),
        }
    }

    pub fn with_free_edges(mut self, edges: Vec<usize>) -> Self {
        self.free_edges = edges;
        self
    }

    fn interior_edges(&self, space: &VelocitySpace) -> Vec<usize> {
        let inside: HashSet<usize> = self.cells.iter().copied().collect();
        let mut edges: Vec<usize> = self
            .cells
            .iter()
            .flat_map(|&c| space.mesh().cell_edges(c).iter().map(|le| le.edge))
            .filter(|&e| match space.mesh().edges()[e].cells {
                (a, Some(b)) => inside.contains(&a) && inside.contains(&b),
                _ => false,
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Global DOFs of the patch space, optionally without the normal means
    /// of interior edges.
    pub fn dofs(&self, space: &VelocitySpace, drop_interior_means: bool) -> Vec<usize> {
        let interior = self.interior_edges(space);
        let mut dofs = Vec::new();
        for &e in &interior {
            for kind in DofKind::ALL {
                if !(drop_interior_means && kind == DofKind::NormalMean) {
                    dofs.push(VelocitySpace::dof(e, kind));
                }
            }
        }
        for &e in &self.free_edges {
            dofs.extend((0..4).map(|k| 4 * e + k));
        }
        dofs.sort_unstable();
        dofs.dedup();
        dofs
    }

    /// Divergence of the patch DOFs tested against discontinuous P1 on the
    /// patch cells; dense `3·#cells × #dofs`.
    pub fn divergence_matrix(&self, space: &VelocitySpace, dofs: &[usize]) -> Mat<f64> {
        let col: std::collections::HashMap<usize, usize> =
            dofs.iter().enumerate().map(|(k, &d)| (d, k)).collect();
        let rule = quadrature_triangle(4).expect("degree 4");
        let mut b = Mat::zeros(3 * self.cells.len(), dofs.len());
        for (r, &c) in self.cells.iter().enumerate() {
            let area2 = 2.0 * space.mesh().area(c);
            let gather = space.cell_dofs(c);
            let el = space.element(c);
            for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                let div = el.divergences(*lambda);
                for (q, &(g, sign)) in gather.iter().enumerate() {
                    if let Some(&k) = col.get(&g) {
                        for a in 0..3 {
                            b[(3 * r + a, k)] += area2 * w * sign * div[q] * lambda[a];
                        }
                    }
                }
            }
        }
        b
    }
}

struct Nullity {
    nullity: usize,
    tail: Vec<f64>,
    gap: f64,
    stable: bool,
}

fn nullity_of(b: &Mat<f64>) -> Result<Nullity, AnalysisError> {
    let n = b.ncols();
    let s = singular_values(b)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(Nullity {
            nullity: n,
            tail: vec![0.0; s.len()],
            gap: f64::INFINITY,
            stable: true,
        });
    }
    let rank_at = |t: f64| s.iter().filter(|&&x| x > t * smax).count();
    let rank = rank_at(NULL_THRESHOLD);
    let kept = s[rank - 1];
    // columns beyond the number of computed values are exact zeros
    let dropped = if rank < s.len() {
        s[rank]
    } else if n > rank {
        0.0
    } else {
        f64::NAN
    };
    let gap = if dropped.is_nan() {
        f64::INFINITY
    } else {
        kept / dropped.max(f64::EPSILON * smax)
    };
    let mut tail: Vec<f64> = s.iter().rev().take(8).map(|x| x / smax).collect();
    tail.truncate(8);
    Ok(Nullity {
        nullity: n - rank,
        tail,
        gap,
        stable: rank_at(1e-10) == rank && rank_at(1e-8) == rank,
    })
}

/// Numeric dimension of the divergence-free subspace of the patch space,
/// and of its subspace with vanishing interior normal means.
pub fn kernel_dimension(
    space: &VelocitySpace,
    patch: &Patch,
    expected: Option<Expected>,
    zn_expected: Option<Expected>,
) -> Result<KernelReport, AnalysisError> {
    let dofs = patch.dofs(space, false);
    let full = nullity_of(&patch.divergence_matrix(space, &dofs))?;
    let zn = if zn_expected.is_some() {
        let dofs = patch.dofs(space, true);
        Some(nullity_of(&patch.divergence_matrix(space, &dofs))?)
    } else {
        None
    };
    let mut gap = full.gap;
    let mut stable = full.stable;
    if let Some(z) = &zn {
        gap = gap.min(z.gap);
        stable &= z.stable;
    }
    Ok(KernelReport {
        description: patch.description.clone(),
        velocity_dofs: dofs.len(),
        pressure_dofs: 3 * patch.cells.len(),
        nullity: full.nullity,
        expected,
        zn_nullity: zn.as_ref().map(|z| z.nullity),
        zn_expected,
        spectrum_tail: full.tail,
        gap,
        threshold_stable: stable,
    })
}

/// Orthonormal basis (columns, over `dofs`) of the patch kernel.
pub fn null_space(
    space: &VelocitySpace,
    patch: &Patch,
    dofs: &[usize],
) -> Result<Mat<f64>, AnalysisError> {
    let b = patch.divergence_matrix(space, dofs);
    let n = dofs.len();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let svd = b.svd().map_err(|_| AnalysisError::EigenFailure)?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let smax = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    // columns of V past the computed values span exact null directions
    let cols: Vec<usize> = (0..n)
        .filter(|&i| i >= k || s[i] <= NULL_THRESHOLD * smax)
        .collect();
    let v = svd.V();
    Ok(Mat::from_fn(n, cols.len(), |i, j| v[(i, cols[j])]))
}

/// The five single-cell fields vanishing (in the DOF sense) on edge `i`,
/// as local coefficient vectors; `j = i + 1`, `k = i + 2`.
#[derive(Clone, Debug)]
pub struct LocalBases {
    /// Supported on `e_j` only.
    pub wj: [f64; 12],
    /// Supported on `e_k` only.
    pub wk: [f64; 12],
    pub wjk: [f64; 12],
    pub wkj: [f64; 12],
    /// The field with nonzero normal means.
    pub wa: [f64; 12],
}

pub fn local_bases(geom: &CellGeometry, i: usize) -> LocalBases {
    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
    let (li, lj, lk) = (geom.lengths[i], geom.lengths[j], geom.lengths[k]);
    let s = geom.area;
    let combo = |terms: &[(usize, usize, f64)]| {
        let mut c = [0.0; 12];
        for &(e, m, v) in terms {
            c[4 * e + m] += v;
        }
        c
    };
    let (l2i, l2j, l2k) = (li * li, lj * lj, lk * lk);
    let c1 = (-l2i * l2j + 2.0 * l2i * l2k + l2j * l2j + 3.0 * l2j * l2k - 2.0 * l2k * l2k)
        / (12.0 * lj * l2j * l2k);
    let c2 = (l2i - l2j + 3.0 * l2k) / (40.0 * lj * l2k);
    LocalBases {
        wj: combo(&[(j, 1, 2.0 * s / (3.0 * l2j)), (j, 3, -1.0)]),
        wk: combo(&[(k, 1, -2.0 * s / (3.0 * l2k)), (k, 3, 1.0)]),
        wjk: combo(&[
            (j, 1, -1.0 / (3.0 * lj)),
            (j, 2, 1.0 / (10.0 * lj)),
            (k, 1, -2.0 / (3.0 * lk)),
        ]),
        wkj: combo(&[
            (j, 1, -2.0 / (3.0 * lj)),
            (k, 1, -1.0 / (3.0 * lk)),
            (k, 2, -1.0 / (10.0 * lk)),
        ]),
        wa: combo(&[(j, 0, -1.0 / lj), (j, 1, c1), (j, 2, c2), (k, 0, 1.0 / lk)]),
    }
}

/// An atom function as a global coefficient vector.
#[derive(Clone, Debug)]
pub struct AtomFunction {
    /// Cells in counter-clockwise order around the common vertex.
    pub cells: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Largest disagreement between the two cells of an interior edge.
    pub conformity_defect: f64,
}

/// The divergence-free field on an open chain of four cells around one
/// vertex, or on a closed triple of pairwise adjacent cells.
///
/// Each cell is written in its local bases with `e_i` the side opposite the
/// common vertex; the chain is traversed counter-clockwise, so the edge to
/// the next cell plays `e_j` and the edge to the previous one `e_k`.
pub fn atom_function(
    space: &VelocitySpace,
    cells: &[usize],
) -> Result<AtomFunction, AnalysisError> {
    let mesh = space.mesh();
    let chain = mesh.extract_chain_patch(cells)?;
    match (cells.len(), chain.is_closed()) {
        (4, _) | (3, true) => {}
        (n, closed) => {
            return Err(AnalysisError::Patch(format!(
                "atoms live on open 4-chains or closed triples, got {n} cells ({})",
                if closed { "closed" } else { "open" }
            )))
        }
    }
    let center = mesh.cells()[cells[0]]
        .iter()
        .copied()
        .find(|v| cells.iter().all(|&c| mesh.cells()[c].contains(v)))
        .ok_or_else(|| AnalysisError::Patch("cells do not share a common vertex".into()))?;
    let local_of = |c: usize, e: usize| {
        mesh.cell_edges(c)
            .iter()
            .position(|le| le.edge == e)
            .expect("edge of cell")
    };
    let center_of = |c: usize| {
        mesh.cells()[c]
            .iter()
            .position(|&v| v == center)
            .expect("centre")
    };

    // orient counter-clockwise: the edge to the next cell must be e_j of the first
    let mut order = cells.to_vec();
    let e_first = mesh.shared_edge(order[0], order[1]).expect("adjacent");
    if local_of(order[0], e_first) != (center_of(order[0]) + 1) % 3 {
        if chain.is_closed() {
            order[1..].reverse();
        } else {
            order.reverse();
        }
    }
    let n = order.len();
    let bases: Vec<LocalBases> = order
        .iter()
        .map(|&c| local_bases(&mesh.cell_geometry(c), center_of(c)))
        .collect();
    let area = |s: usize| mesh.area(order[s]);
    // edge[s] is shared by cells s−1 and s; for the closed triple edge[0] closes the loop
    let edge_len = |a: usize, b: usize| {
        mesh.edge_length(mesh.shared_edge(order[a], order[b]).expect("adjacent"))
    };
    let comb = |terms: &[(f64, &[f64; 12])]| {
        let mut c = [0.0; 12];
        for (s, w) in terms {
            c.iter_mut().zip(w.iter()).for_each(|(a, b)| *a += s * b);
        }
        c
    };
    let d2 = edge_len(0, 1);
    // single-edge coefficients: +d₂/(S₁+S₂) and −d₄/(S₃+S₄) with the bases above
    let r = d2 / (area(0) + area(1));
    let local: Vec<[f64; 12]> = if n == 4 {
        let d4 = edge_len(2, 3);
        let q = -d4 / (area(2) + area(3));
        vec![
            comb(&[(r, &bases[0].wj)]),
            comb(&[(r, &bases[1].wk), (-1.0, &bases[1].wjk)]),
            comb(&[(-1.0, &bases[2].wkj), (q, &bases[2].wj)]),
            comb(&[(q, &bases[3].wk)]),
        ]
    } else {
        let d1 = edge_len(2, 0);
        let q = -d1 / (area(2) + area(0));
        vec![
            comb(&[(r, &bases[0].wj), (q, &bases[0].wk)]),
            comb(&[(r, &bases[1].wk), (-1.0, &bases[1].wjk)]),
            comb(&[(-1.0, &bases[2].wkj), (q, &bases[2].wj)]),
        ]
    };

    let mut coefficients = vec![0.0; space.num_dofs()];
    let mut written = vec![false; space.num_dofs()];
    let mut defect = 0.0f64;
    for (&c, loc) in order.iter().zip(&local) {
        for (q, &(g, sign)) in space.cell_dofs(c).iter().enumerate() {
            let value = sign * loc[q];
            if written[g] {
                defect = defect.max((coefficients[g] - value).abs());
            } else {
                coefficients[g] = value;
                written[g] = true;
            }
        }
    }
    Ok(AtomFunction {
        cells: order,
        coefficients,
        conformity_defect: defect,
    })
}

/// All `m` atom functions of a macroelement: for `m ≥ 4` one per run of
/// four consecutive cells, for `m = 3` one per choice of overlapping cell.
pub fn macroelement_atoms(
    space: &VelocitySpace,
    center: usize,
) -> Result<Vec<AtomFunction>, AnalysisError> {
    let macro_ = space.mesh().extract_macroelement(center)?;
    let m = macro_.size();
    let run = m.min(4);
    (0..m)
        .map(|l| {
            let cells: Vec<usize> = (0..run).map(|s| macro_.cells[(l + s) % m]).collect();
            atom_function(space, &cells)
        })
        .collect()
}

/// Certification data of one atom function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomCheck {
    /// `max |div v|` at quadrature points of the support.
    pub divergence: f64,
    pub conformity_defect: f64,
    /// Largest coefficient on DOFs outside the patch space.
    pub outside: f64,
    pub norm: f64,
}

impl AtomCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.norm > 0.0
            && self.divergence <= tol
            && self.conformity_defect <= tol
            && self.outside <= tol
    }
}

pub fn check_atom(space: &VelocitySpace, atom: &AtomFunction) -> AtomCheck {
    let patch = Patch::new("atom", atom.cells.clone());
    let inside: HashSet<usize> = patch.dofs(space, false).into_iter().collect();
    let outside = atom
        .coefficients
        .iter()
        .enumerate()
        .filter(|(d, _)| !inside.contains(d))
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let rule = quadrature_triangle(6).expect("degree 6");
    let mut divergence = 0.0f64;
    for &c in &atom.cells {
        for lambda in rule
            .points
            .iter()
            .chain(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        {
            divergence = divergence.max(
                space
                    .evaluate_divergence(&atom.coefficients, c, *lambda)
                    .abs(),
            );
        }
    }
    let norm = atom.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    AtomCheck {
        divergence,
        conformity_defect: atom.conformity_defect,
        outside,
        norm,
    }
}

/// `max_k dist(n_k, span(atoms))` over the orthonormal columns `n_k`,
/// all restricted to `dofs`.
pub fn span_residual(null: &Mat<f64>, atoms: &[&[f64]], dofs: &[usize]) -> f64 {
    // Gram–Schmidt on the atoms
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for a in atoms {
        let mut v: Vec<f64> = dofs.iter().map(|&d| a[d]).collect();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    (0..null.ncols())
        .map(|k| {
            let mut v: Vec<f64> = (0..null.nrows()).map(|i| null[(i, k)]).collect();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{random_fan, structured_square_mesh, DiagonalRule, Triangulation};
    use crate::space::BoundarySelection;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn space(mesh: Triangulation) -> VelocitySpace {
        VelocitySpace::new(Arc::new(mesh), &BoundarySelection::None).unwrap()
    }

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn local_bases_are_divergence_free_and_vanish_on_ei() {
        let geom = CellGeometry::new([[0.1, 0.0], [1.3, 0.2], [0.4, 0.9]]).unwrap();
        let el = crate::element::NppElement::new(geom.clone());
        for i in 0..3 {
            let b = local_bases(&geom, i);
            let all = [b.wj, b.wk, b.wjk, b.wkj, b.wa];
            for w in &all {
                assert!((0..4).all(|m| w[4 * i + m] == 0.0));
                for l in [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.1, 0.1, 0.8]] {
                    let d: f64 = el.divergences(l).iter().zip(w).map(|(a, c)| a * c).sum();
                    assert!(d.abs() < 1e-12);
                }
            }
            // w_k vanishes on e_j, w_j on e_k
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            assert!((0..4).all(|m| b.wk[4 * j + m] == 0.0 && b.wj[4 * k + m] == 0.0));
            let m = Mat::from_fn(12, 5, |r, c| all[c][r]);
            let s = singular_values(&m).unwrap();
            assert!(s[4] / s[0] > 1e-6);
        }
    }

    #[test]
    fn criss_cross_fan_has_one_atom() {
        let mesh = structured_square_mesh(1, DiagonalRule::CrissCross);
        let center = (0..mesh.num_vertices())
            .find(|&v| !mesh.is_boundary_vertex(v))
            .unwrap();
        let sp = space(mesh);
        let mac = sp.mesh().extract_macroelement(center).unwrap();
        let report = kernel_dimension(
            &sp,
            &Patch::new("criss-cross", mac.cells.clone()),
            Some(Expected::AtMost(5)),
            Some(Expected::Exactly(4)),
        )
        .unwrap();
        assert!(report.passes(), "{report:?}");
        let atoms = macroelement_atoms(&sp, center).unwrap();
        for a in &atoms {
            assert!(check_atom(&sp, a).passes(1e-11), "{:?}", check_atom(&sp, a));
        }
    }

    #[test]
    fn small_patches_match_lemmas() {
        let mut rng = rng();
        let fan = random_fan(6, &mut rng);
        let mac = fan.extract_macroelement(0).unwrap();
        let sp = space(fan);
        let c = &mac.cells;
        let r = kernel_dimension(
            &sp,
            &Patch::new("two", c[..2].to_vec()),
            Some(Expected::Exactly(0)),
            None,
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");
        let e3 = mac.edges[2];
        let r = kernel_dimension(
            &sp,
            &Patch::new("two+e3", c[..2].to_vec()).with_free_edges(vec![e3]),
            Some(Expected::Exactly(2)),
            None,
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");
        let r = kernel_dimension(
            &sp,
            &Patch::new("three", c[..3].to_vec()),
            Some(Expected::Exactly(0)),
            None,
        )
        .unwrap();
        assert!(r.passes(), "{r:?}");
        let four = Patch::new("four", c[..4].to_vec());
        let r = kernel_dimension(&sp, &four, Some(Expected::Exactly(1)), None).unwrap();
        assert!(r.passes(), "{r:?}");
        for cells in [c[..4].to_vec(), c[..4].iter().rev().copied().collect()] {
            let atom = atom_function(&sp, &cells).unwrap();
            assert!(
                check_atom(&sp, &atom).passes(1e-11),
                "{:?}",
                check_atom(&sp, &atom)
            );
            let dofs = four.dofs(&sp, false);
            let null = null_space(&sp, &four, &dofs).unwrap();
            assert_eq!(null.ncols(), 1);
            assert!(span_residual(&null, &[&atom.coefficients], &dofs) < 1e-9);
        }
    }

    #[test]
    fn macroelements_have_m_atoms() {
        let mut rng = rng();
        for m in 3..=8 {
            let fan = random_fan(m, &mut rng);
            let sp = space(fan);
            let mac = sp.mesh().extract_macroelement(0).unwrap();
            let patch = Patch::new(format!("m={m}"), mac.cells.clone());
            let r = kernel_dimension(
                &sp,
                &patch,
                Some(Expected::AtMost(m + 1)),
                Some(Expected::Exactly(m)),
            )
            .unwrap();
            assert!(r.passes(), "{r:?}");
            let atoms = macroelement_atoms(&sp, 0).unwrap();
            assert_eq!(atoms.len(), m);
            for a in &atoms {
                let chk = check_atom(&sp, a);
                assert!(chk.passes(1e-11), "m={m}: {chk:?}");
            }
            let dofs = patch.dofs(&sp, true);
            let null = null_space(&sp, &patch, &dofs).unwrap();
            assert_eq!(null.ncols(), m);
            let refs: Vec<&[f64]> = atoms.iter().map(|a| a.coefficients.as_slice()).collect();
            assert!(span_residual(&null, &refs, &dofs) < 1e-9);
        }
    }

    #[test]
    fn wrong_patches_are_rejected() {
        let sp = space(random_fan(6, &mut rng()));
        let mac = sp.mesh().extract_macroelement(0).unwrap();
        assert!(atom_function(&sp, &mac.cells[..3]).is_err());
        assert!(atom_function(
            &sp,
            &[mac.cells[0], mac.cells[2], mac.cells[1], mac.cells[3]]
        )
        .is_err());
    }
}
