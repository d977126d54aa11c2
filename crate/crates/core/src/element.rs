//! The 12-DOF quadratic vector element and the scalar Lagrange elements.
//!
//! Local conventions: vertex `i` is opposite edge `i`; edge `i` runs from
//! vertex `j = i + 1` to `k = i + 2` (mod 3), counter-clockwise, so its
//! parameter `s ∈ [0, 1]` has `λ_j = 1 - s`, `λ_k = s`. Normals are outward
//! and tangents are normals rotated by +90°.

use thiserror::Error;

use crate::mesh::{Point, Triangulation};
use crate::quadrature::EdgeRule;

pub type Vec2 = [f64; 2];
/// Row `c` holds the gradient of component `c`.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum ElementError {
    #[error("degenerate triangle (area {0:e})")]
    Degenerate(f64),
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn outer(v: Vec2, g: Vec2, s: f64) -> Mat2 {
    [
        [s * v[0] * g[0], s * v[0] * g[1]],
        [s * v[1] * g[0], s * v[1] * g[1]],
    ]
}

#[inline]
fn add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGeometry {
    pub points: [Point; 3],
    pub area: f64,
    pub lengths: [f64; 3],
    pub normals: [Vec2; 3],
    pub tangents: [Vec2; 3],
    pub grad_lambda: [Vec2; 3],
}

impl CellGeometry {
    /// Vertices may be given in either orientation, but the local numbering
    /// is kept, so clockwise input yields inward normals; meshes always
    /// store cells counter-clockwise.
    pub fn new(points: [Point; 3]) -> Result<Self, ElementError> {
        let [a, b, c] = points;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let scale = points
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max((b[0] - a[0]).hypot(b[1] - a[1]));
        if !(det.abs() > 1e-14 * scale * scale) {
            return Err(ElementError::Degenerate(0.5 * det));
        }
        let orient = det.signum();
        let mut lengths = [0.0; 3];
        let mut normals = [[0.0; 2]; 3];
        let mut tangents = [[0.0; 2]; 3];
        let mut grad_lambda = [[0.0; 2]; 3];
        for i in 0..3 {
            let p = points[(i + 1) % 3];
            let q = points[(i + 2) % 3];
            let l = (q[0] - p[0]).hypot(q[1] - p[1]);
            let t = [(q[0] - p[0]) / l, (q[1] - p[1]) / l];
            let n = [orient * t[1], -orient * t[0]];
            lengths[i] = l;
            normals[i] = n;
            tangents[i] = [-n[1], n[0]];
            // ∇λ_i = (rot(q - p)) / det
            grad_lambda[i] = [-(q[1] - p[1]) / det, (q[0] - p[0]) / det];
        }
        Ok(Self {
            points,
            area: 0.5 * det.abs(),
            lengths,
            normals,
            tangents,
            grad_lambda,
        })
    }

    pub fn to_physical(&self, lambda: [f64; 3]) -> Point {
        let [a, b, c] = self.points;
        [
            lambda[0] * a[0] + lambda[1] * b[0] + lambda[2] * c[0],
            lambda[0] * a[1] + lambda[1] * b[1] + lambda[2] * c[1],
        ]
    }

    pub fn barycentric(&self, p: Point) -> [f64; 3] {
        let l1 = dot(
            self.grad_lambda[1],
            [p[0] - self.points[0][0], p[1] - self.points[0][1]],
        );
        let l2 = dot(
            self.grad_lambda[2],
            [p[0] - self.points[0][0], p[1] - self.points[0][1]],
        );
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn diameter(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }

    /// Point on local edge `i` at parameter `s`.
    pub fn edge_point(&self, i: usize, s: f64) -> Point {
        let p = self.points[(i + 1) % 3];
        let q = self.points[(i + 2) % 3];
        [(1.0 - s) * p[0] + s * q[0], (1.0 - s) * p[1] + s * q[1]]
    }
}

impl Triangulation {
    pub fn cell_geometry(&self, cell: usize) -> CellGeometry {
        CellGeometry::new(self.cell_points(cell)).expect("mesh cells are nondegenerate")
    }
}

pub fn cell_geometry(mesh: &Triangulation, cell: usize) -> Result<CellGeometry, ElementError> {
    CellGeometry::new(mesh.cell_points(cell))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofKind {
    NormalMean,
    /// Normal moment against `λ_j - λ_k`.
    NormalLegendre1,
    /// Normal moment against `1/6 - λ_j λ_k`.
    NormalLegendre2,
    TangentialMean,
}

impl DofKind {
    pub const ALL: [DofKind; 4] = [
        Self::NormalMean,
        Self::NormalLegendre1,
        Self::NormalLegendre2,
        Self::TangentialMean,
    ];

    /// Sign picked up when the edge is traversed in the opposite direction
    /// (normal and tangent both reverse, and so does `λ_j - λ_k`).
    pub fn flip_sign(self) -> f64 {
        match self {
            Self::NormalLegendre1 => 1.0,
            _ => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalDof {
    pub edge: usize,
    pub kind: DofKind,
}

/// Local DOF `4 i + m` is moment `m` on edge `i`.
pub fn local_dofs() -> [LocalDof; 12] {
    std::array::from_fn(|d| LocalDof {
        edge: d / 4,
        kind: DofKind::ALL[d % 4],
    })
}

/// The four edge moments of `f` along the segment `p -> q` with normal
/// `rot_{-90}(q - p)`, for the parameterisation `λ_p = 1 - s`.
pub fn edge_moments(p: Point, q: Point, f: &impl Fn(Point) -> Vec2, rule: &EdgeRule) -> [f64; 4] {
    let l = (q[0] - p[0]).hypot(q[1] - p[1]);
    let t = [(q[0] - p[0]) / l, (q[1] - p[1]) / l];
    let n = [t[1], -t[0]];
    let mut m = [0.0; 4];
    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
        let u = f([(1.0 - s) * p[0] + s * q[0], (1.0 - s) * p[1] + s * q[1]]);
        let un = dot(u, n);
        let (lp, lq) = (1.0 - s, s);
        m[0] += w * un;
        m[1] += w * un * (lp - lq);
        m[2] += w * un * (1.0 / 6.0 - lp * lq);
        m[3] += w * dot(u, t);
    }
    m
}

/// The 12 local DOFs of `f` on a counter-clockwise cell.
pub fn dof_functionals(
    geom: &CellGeometry,
    f: &impl Fn(Point) -> Vec2,
    rule: &EdgeRule,
) -> [f64; 12] {
    let mut d = [0.0; 12];
    for i in 0..3 {
        let m = edge_moments(geom.points[(i + 1) % 3], geom.points[(i + 2) % 3], f, rule);
        d[4 * i..4 * i + 4].copy_from_slice(&m);
    }
    d
}

/// Local basis of the new element on one cell, dual to [`local_dofs`].
#[derive(Clone, Debug)]
pub struct NppElement {
    pub geom: CellGeometry,
    // a_i = t_k / (n_i·t_k), b_i = t_j / (n_i·t_j)
    a: [Vec2; 3],
    b: [Vec2; 3],
}

#[inline]
fn p(l: f64) -> f64 {
    l * (3.0 * l - 2.0)
}

#[inline]
fn dp(l: f64) -> f64 {
    6.0 * l - 2.0
}

impl NppElement {
    pub fn new(geom: CellGeometry) -> Self {
        let mut a = [[0.0; 2]; 3];
        let mut b = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let n = geom.normals[i];
            let (tj, tk) = (geom.tangents[j], geom.tangents[k]);
            a[i] = [tk[0] / dot(n, tk), tk[1] / dot(n, tk)];
            b[i] = [tj[0] / dot(n, tj), tj[1] / dot(n, tj)];
        }
        Self { geom, a, b }
    }

    pub fn values(&self, lambda: [f64; 3]) -> [Vec2; 12] {
        let mut out = [[0.0; 2]; 12];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let (pj, pk, q) = (p(lambda[j]), p(lambda[k]), lambda[j] * lambda[k]);
            let (a, b, n, t) = (
                self.a[i],
                self.b[i],
                self.geom.normals[i],
                self.geom.tangents[i],
            );
            for c in 0..2 {
                out[4 * i][c] = pj * a[c] + pk * b[c] + 6.0 * q * n[c];
                out[4 * i + 1][c] = 3.0 * (pj * a[c] - pk * b[c]);
                out[4 * i + 2][c] = 30.0 * (pj * a[c] + pk * b[c]);
                out[4 * i + 3][c] = 6.0 * q * t[c];
            }
        }
        out
    }

    pub fn gradients(&self, lambda: [f64; 3]) -> [Mat2; 12] {
        let g = self.geom.grad_lambda;
        let mut out = [[[0.0; 2]; 2]; 12];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let gpj = [dp(lambda[j]) * g[j][0], dp(lambda[j]) * g[j][1]];
            let gpk = [dp(lambda[k]) * g[k][0], dp(lambda[k]) * g[k][1]];
            let gq = [
                lambda[j] * g[k][0] + lambda[k] * g[j][0],
                lambda[j] * g[k][1] + lambda[k] * g[j][1],
            ];
            let (a, b, n, t) = (
                self.a[i],
                self.b[i],
                self.geom.normals[i],
                self.geom.tangents[i],
            );
            out[4 * i] = add(
                add(outer(a, gpj, 1.0), outer(b, gpk, 1.0)),
                outer(n, gq, 6.0),
            );
            out[4 * i + 1] = add(outer(a, gpj, 3.0), outer(b, gpk, -3.0));
            out[4 * i + 2] = add(outer(a, gpj, 30.0), outer(b, gpk, 30.0));
            out[4 * i + 3] = outer(t, gq, 6.0);
        }
        out
    }

    pub fn divergences(&self, lambda: [f64; 3]) -> [f64; 12] {
        self.gradients(lambda).map(|g| g[0][0] + g[1][1])
    }
}

/// P1 Lagrange values: the barycentric coordinates themselves.
pub fn eval_scalar_p1(lambda: [f64; 3]) -> [f64; 3] {
    lambda
}

pub fn eval_scalar_p1_gradients(geom: &CellGeometry) -> [Vec2; 3] {
    geom.grad_lambda
}

/// P2 Lagrange values: vertices first, then the midpoint of edge `i` at
/// index `3 + i`.
pub fn eval_scalar_p2(lambda: [f64; 3]) -> [f64; 6] {
    let [a, b, c] = lambda;
    [
        a * (2.0 * a - 1.0),
        b * (2.0 * b - 1.0),
        c * (2.0 * c - 1.0),
        4.0 * b * c,
        4.0 * c * a,
        4.0 * a * b,
    ]
}

pub fn eval_scalar_p2_gradients(geom: &CellGeometry, lambda: [f64; 3]) -> [Vec2; 6] {
    let g = geom.grad_lambda;
    let sc = |s: f64, v: Vec2| [s * v[0], s * v[1]];
    let sum = |u: Vec2, v: Vec2| [u[0] + v[0], u[1] + v[1]];
    let [a, b, c] = lambda;
    [
        sc(4.0 * a - 1.0, g[0]),
        sc(4.0 * b - 1.0, g[1]),
        sc(4.0 * c - 1.0, g[2]),
        sum(sc(4.0 * b, g[2]), sc(4.0 * c, g[1])),
        sum(sc(4.0 * c, g[0]), sc(4.0 * a, g[2])),
        sum(sc(4.0 * a, g[1]), sc(4.0 * b, g[0])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{quadrature_edge, quadrature_triangle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> CellGeometry {
        CellGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    pub(crate) fn random_triangle(rng: &mut impl Rng) -> CellGeometry {
        loop {
            let pts: [Point; 3] =
                std::array::from_fn(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let g = match CellGeometry::new(pts) {
                Ok(g) => g,
                Err(_) => continue,
            };
            // keep the minimum angle away from zero, and CCW
            let h = g.diameter();
            if g.area > 0.05 * h * h {
                let [a, b, c] = pts;
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                return if det > 0.0 {
                    g
                } else {
                    CellGeometry::new([a, c, b]).unwrap()
                };
            }
        }
    }

    fn random_bary(rng: &mut impl Rng) -> [f64; 3] {
        let (mut x, mut y): (f64, f64) = (rng.gen(), rng.gen());
        if x + y > 1.0 {
            x = 1.0 - x;
            y = 1.0 - y;
        }
        [1.0 - x - y, x, y]
    }

    #[test]
    fn reference_geometry() {
        let g = reference();
        assert!((g.area - 0.5).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g.normals[0][0] - s).abs() < 1e-15 && (g.normals[0][1] - s).abs() < 1e-15);
        assert!((g.lengths[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(CellGeometry::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
    }

    #[test]
    fn geometry_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g = random_triangle(&mut rng);
            let s: Vec2 = [0, 1].map(|c| g.grad_lambda.iter().map(|v| v[c]).sum());
            assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
            for i in 0..3 {
                assert!(dot(g.normals[i], g.tangents[i]).abs() < 1e-12);
                let cross = g.normals[i][0] * g.tangents[i][1] - g.normals[i][1] * g.tangents[i][0];
                assert!((cross - 1.0).abs() < 1e-12);
                for c in 0..2 {
                    let expected = -g.lengths[i] * g.normals[i][c] / (2.0 * g.area);
                    assert!(
                        (g.grad_lambda[i][c] - expected).abs() < 1e-12 * expected.abs().max(1.0)
                    );
                }
            }
            let lam = random_bary(&mut rng);
            let back = g.barycentric(g.to_physical(lam));
            for i in 0..3 {
                assert!((back[i] - lam[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let e = NppElement::new(reference());
        for i in 0..3 {
            let mut lam = [0.5; 3];
            lam[i] = 0.0;
            let v = e.values(lam);
            assert!((dot(v[4 * i], e.geom.normals[i]) - 1.0).abs() < 1e-14);
            let t = e.geom.tangents[i];
            assert!(
                (v[4 * i + 3][0] - 1.5 * t[0]).abs() < 1e-14
                    && (v[4 * i + 3][1] - 1.5 * t[1]).abs() < 1e-14
            );
            let mut vertex = [0.0; 3];
            vertex[i] = 1.0;
            let v = e.values(vertex);
            assert!(v[4 * i][0].abs() < 1e-15 && v[4 * i][1].abs() < 1e-15);
        }
    }

    #[test]
    fn unisolvence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rule = quadrature_edge(6).unwrap();
        for _ in 0..200 {
            let g = random_triangle(&mut rng);
            let e = NppElement::new(g.clone());
            for b in 0..12 {
                let f = |x: Point| e.values(g.barycentric(x))[b];
                let d = dof_functionals(&g, &f, &rule);
                for (r, v) in d.iter().enumerate() {
                    let expected = if r == b { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-10, "basis {b} dof {r}: {v}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = random_triangle(&mut rng);
            let e = NppElement::new(g.clone());
            let lam = random_bary(&mut rng);
            let x = g.to_physical(lam);
            let h = 1e-6 * g.diameter();
            let grads = e.gradients(lam);
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let (vp, vm) = (e.values(g.barycentric(xp)), e.values(g.barycentric(xm)));
                for b in 0..12 {
                    for c in 0..2 {
                        let fd = (vp[b][c] - vm[b][c]) / (2.0 * h);
                        let scale = grads[b][c][d].abs().max(1.0);
                        assert!((fd - grads[b][c][d]).abs() < 1e-6 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_is_affine_and_tangential_flux_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let quad = quadrature_triangle(4).unwrap();
        for _ in 0..50 {
            let g = random_triangle(&mut rng);
            let e = NppElement::new(g.clone());
            let at_vertices: [[f64; 12]; 3] = std::array::from_fn(|i| {
                let mut l = [0.0; 3];
                l[i] = 1.0;
                e.divergences(l)
            });
            for _ in 0..5 {
                let lam = random_bary(&mut rng);
                let div = e.divergences(lam);
                for b in 0..12 {
                    let affine: f64 = (0..3).map(|i| lam[i] * at_vertices[i][b]).sum();
                    assert!((div[b] - affine).abs() < 1e-10 * (1.0 + affine.abs()));
                }
            }
            // ∫ div φ = ∮ φ·n, which is |e_i| for the normal-mean function only
            let mut integral = [0.0; 12];
            for (lam, w) in quad.points.iter().zip(&quad.weights) {
                let d = e.divergences(*lam);
                for b in 0..12 {
                    integral[b] += 2.0 * g.area * w * d[b];
                }
            }
            for b in 0..12 {
                let expected = if b % 4 == 0 { g.lengths[b / 4] } else { 0.0 };
                assert!((integral[b] - expected).abs() < 1e-10 * g.diameter());
            }
        }
    }

    #[test]
    fn constant_field_functionals() {
        let g = reference();
        let c = [0.3, -1.7];
        let d = dof_functionals(&g, &|_| c, &quadrature_edge(5).unwrap());
        for i in 0..3 {
            assert!((d[4 * i] - dot(c, g.normals[i])).abs() < 1e-14);
            assert!(d[4 * i + 1].abs() < 1e-14);
            assert!(d[4 * i + 2].abs() < 1e-14);
            assert!((d[4 * i + 3] - dot(c, g.tangents[i])).abs() < 1e-14);
        }
        assert_eq!(
            dof_functionals(&g, &|_| [0.0, 0.0], &quadrature_edge(5).unwrap()),
            [0.0; 12]
        );
    }

    #[test]
    fn quadratic_reproduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rule = quadrature_edge(5).unwrap();
        for _ in 0..50 {
            let g = random_triangle(&mut rng);
            let e = NppElement::new(g.clone());
            let coef: [[f64; 6]; 2] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let f = |x: Point| {
                let m = [1.0, x[0], x[1], x[0] * x[0], x[0] * x[1], x[1] * x[1]];
                [0, 1].map(|c| (0..6).map(|k| coef[c][k] * m[k]).sum::<f64>())
            };
            let d = dof_functionals(&g, &f, &rule);
            for _ in 0..6 {
                let lam = random_bary(&mut rng);
                let v = e.values(lam);
                let exact = f(g.to_physical(lam));
                for c in 0..2 {
                    let rec: f64 = (0..12).map(|b| d[b] * v[b][c]).sum();
                    assert!((rec - exact[c]).abs() < 1e-11 * (1.0 + exact[c].abs()) * 10.0);
                }
            }
        }
    }

    #[test]
    fn edge_flip_covariance() {
        // reversing the parameterisation but keeping the normal fixed flips
        // the first Legendre moment and the tangential mean only
        let rule = quadrature_edge(6).unwrap();
        let f = |x: Point| [x[0] * x[0] + 0.3 * x[1], x[0] * x[1] - 1.0];
        let (p, q) = ([0.2, 0.1], [1.0, 0.7]);
        let fwd = edge_moments(p, q, &f, &rule);
        let rev = edge_moments(q, p, &f, &rule);
        // rev uses the opposite normal: undo that for the normal moments
        let rev_fixed_normal = [-rev[0], -rev[1], -rev[2], rev[3]];
        assert!((fwd[0] - rev_fixed_normal[0]).abs() < 1e-14);
        assert!((fwd[1] + rev_fixed_normal[1]).abs() < 1e-14);
        assert!((fwd[2] - rev_fixed_normal[2]).abs() < 1e-14);
        assert!((fwd[3] + rev_fixed_normal[3]).abs() < 1e-14);
        // with both normal and tangent following the direction
        for (m, kind) in DofKind::ALL.iter().enumerate() {
            assert!((rev[m] - kind.flip_sign() * fwd[m]).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_lagrange() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(eval_scalar_p1([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0]);
        assert!((eval_scalar_p2([0.0, 0.5, 0.5])[3] - 1.0).abs() < 1e-15);
        let g = random_triangle(&mut rng);
        for _ in 0..20 {
            let lam = random_bary(&mut rng);
            assert!((eval_scalar_p2(lam).iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!((eval_scalar_p1(lam).iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let gs = eval_scalar_p2_gradients(&g, lam);
            for c in 0..2 {
                assert!(gs.iter().map(|v| v[c]).sum::<f64>().abs() < 1e-12);
            }
            let x = g.to_physical(lam);
            let h = 1e-6;
            for d in 0..2 {
                let (mut xp, mut xm) = (x, x);
                xp[d] += h;
                xm[d] -= h;
                let (vp, vm) = (
                    eval_scalar_p2(g.barycentric(xp)),
                    eval_scalar_p2(g.barycentric(xm)),
                );
                for b in 0..6 {
                    assert!(
                        ((vp[b] - vm[b]) / (2.0 * h) - gs[b][d]).abs()
                            < 1e-6 * gs[b][d].abs().max(1.0)
                    );
                }
            }
        }
    }
}
