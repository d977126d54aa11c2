//! Assembly of bilinear, trilinear and load forms.
//!
//! Every matrix is assembled over the full DOF range (constrained DOFs
//! included); restriction to free DOFs happens in the solver. All local
//! entries are inserted, zeros included, so matrices assembled on the same
//! space share one sparsity pattern.

use thiserror::Error;

use crate::element::{Mat2, Vec2};
use crate::mesh::Point;
use crate::quadrature::{quadrature_triangle, TriangleRule};
use crate::space::{
    PressureDiscretization, VelocityDiscretization, LOCAL_PRESSURE, LOCAL_VELOCITY,
};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Default triangle quadrature degree for all forms.
pub const DEFAULT_DEGREE: usize = 6;

type Local = [[f64; LOCAL_VELOCITY]; LOCAL_VELOCITY];

fn rule(degree: usize) -> TriangleRule {
    quadrature_triangle(degree).expect("supported quadrature degree")
}

/// Scatters cell matrices `local(cell)` with the DOF signs.
fn assemble_velocity_matrix(
    v: &(impl VelocityDiscretization + ?Sized),
    mut local: impl FnMut(usize) -> Local,
) -> CsrMatrix {
    let n = v.num_dofs();
    let nc = v.mesh().num_cells();
    let mut t = TripletBuilder::with_capacity(n, n, nc * LOCAL_VELOCITY * LOCAL_VELOCITY);
    for cell in 0..nc {
        let dofs = v.cell_dofs(cell);
        let m = local(cell);
        for (i, &(gi, si)) in dofs.iter().enumerate() {
            for (j, &(gj, sj)) in dofs.iter().enumerate() {
                t.push(gi, gj, si * sj * m[i][j]);
            }
        }
    }
    t.build()
}

/// Quadrature points of a cell as (physical weight, barycentric point).
fn cell_points<'a>(
    v: &(impl VelocityDiscretization + ?Sized),
    cell: usize,
    rule: &'a TriangleRule,
) -> impl Iterator<Item = (f64, [f64; 3])> + 'a {
    let scale = 2.0 * v.mesh().area(cell);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(move |(p, w)| (scale * w, *p))
}

#[inline]
fn frob(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

#[inline]
fn matvec2(a: &Mat2, x: Vec2) -> Vec2 {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

/// `Σ_T ∫_T ∇u : ∇v` (without the ε² factor).
pub fn assemble_gradgrad(v: &(impl VelocityDiscretization + ?Sized)) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (w, lam) in cell_points(v, cell, &q) {
            let g = v.basis_gradients(cell, lam);
            for i in 0..LOCAL_VELOCITY {
                for j in i..LOCAL_VELOCITY {
                    m[i][j] += w * frob(&g[i], &g[j]);
                }
            }
        }
        symmetrize(&mut m);
        m
    })
}

/// `Σ_T ∫_T ε(u) : ε(v)` with the symmetric gradient ε.
pub fn assemble_symmetric_gradient(v: &(impl VelocityDiscretization + ?Sized)) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (w, lam) in cell_points(v, cell, &q) {
            let g = v.basis_gradients(cell, lam).map(|g| {
                let off = 0.5 * (g[0][1] + g[1][0]);
                [[g[0][0], off], [off, g[1][1]]]
            });
            for i in 0..LOCAL_VELOCITY {
                for j in i..LOCAL_VELOCITY {
                    m[i][j] += w * frob(&g[i], &g[j]);
                }
            }
        }
        symmetrize(&mut m);
        m
    })
}

/// `∫ u · v`.
pub fn assemble_mass(v: &(impl VelocityDiscretization + ?Sized)) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (w, lam) in cell_points(v, cell, &q) {
            let phi = v.basis(cell, lam);
            for i in 0..LOCAL_VELOCITY {
                for j in i..LOCAL_VELOCITY {
                    m[i][j] += w * (phi[i][0] * phi[j][0] + phi[i][1] * phi[j][1]);
                }
            }
        }
        symmetrize(&mut m);
        m
    })
}

fn symmetrize(m: &mut Local) {
    for i in 0..LOCAL_VELOCITY {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
}

/// `∫ 2ω u^⊥ · v` with `u^⊥ = (-u₂, u₁)`; skew-symmetric.
pub fn assemble_coriolis(v: &(impl VelocityDiscretization + ?Sized), omega: f64) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (w, lam) in cell_points(v, cell, &q) {
            let phi = v.basis(cell, lam);
            for i in 0..LOCAL_VELOCITY {
                for j in i + 1..LOCAL_VELOCITY {
                    let c = 2.0 * omega * w * (-phi[j][1] * phi[i][0] + phi[j][0] * phi[i][1]);
                    m[i][j] += c;
                    m[j][i] -= c;
                }
            }
        }
        m
    })
}

/// How the convective term is discretised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvectionForm {
    /// `Σ_T ∫_T (w·∇)u · v`.
    #[default]
    Convective,
    /// `½ Σ_T ∫_T [(w·∇)u · v − (w·∇)v · u]`.
    SkewSymmetric,
}

/// `N(w)[i][j] = Σ_T ∫_T (w·∇)φ_j · φ_i` (or its skew-symmetric variant).
pub fn assemble_convection(
    v: &(impl VelocityDiscretization + ?Sized),
    w: &[f64],
    form: ConvectionForm,
) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (wt, lam) in cell_points(v, cell, &q) {
            let wv = v.evaluate(w, cell, lam);
            let phi = v.basis(cell, lam);
            let adv = v.basis_gradients(cell, lam).map(|g| matvec2(&g, wv));
            for i in 0..LOCAL_VELOCITY {
                for j in 0..LOCAL_VELOCITY {
                    let a = phi[i][0] * adv[j][0] + phi[i][1] * adv[j][1];
                    m[i][j] += wt
                        * match form {
                            ConvectionForm::Convective => a,
                            ConvectionForm::SkewSymmetric => {
                                0.5 * (a - (phi[j][0] * adv[i][0] + phi[j][1] * adv[i][1]))
                            }
                        };
                }
            }
        }
        m
    })
}

/// Derivative of `u ↦ N(u) u` at `w` is `N(w) + J(w)`; this returns `J(w)`,
/// `J[i][j] = Σ_T ∫_T (φ_j·∇)w · φ_i` (or the skew-symmetric analogue).
pub fn convection_jacobian(
    v: &(impl VelocityDiscretization + ?Sized),
    w: &[f64],
    form: ConvectionForm,
) -> CsrMatrix {
    let q = rule(DEFAULT_DEGREE);
    assemble_velocity_matrix(v, |cell| {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_VELOCITY];
        for (wt, lam) in cell_points(v, cell, &q) {
            let gw = v.evaluate_gradient(w, cell, lam);
            let wv = v.evaluate(w, cell, lam);
            let phi = v.basis(cell, lam);
            let grads = v.basis_gradients(cell, lam);
            for i in 0..LOCAL_VELOCITY {
                for j in 0..LOCAL_VELOCITY {
                    let dw = matvec2(&gw, phi[j]);
                    let a = phi[i][0] * dw[0] + phi[i][1] * dw[1];
                    m[i][j] += wt
                        * match form {
                            ConvectionForm::Convective => a,
                            ConvectionForm::SkewSymmetric => {
                                // remaining part of d/du of −½ (u·∇)φ_i · u
                                let gi = matvec2(&grads[i], phi[j]);
                                0.5 * (a - (gi[0] * wv[0] + gi[1] * wv[1]))
                            }
                        };
                }
            }
        }
        m
    })
}

/// `∫ f · v` for every velocity DOF.
pub fn assemble_load(
    v: &(impl VelocityDiscretization + ?Sized),
    f: &dyn Fn(Point) -> Vec2,
) -> Vec<f64> {
    assemble_load_with(v, f, DEFAULT_DEGREE)
}

pub fn assemble_load_with(
    v: &(impl VelocityDiscretization + ?Sized),
    f: &dyn Fn(Point) -> Vec2,
    degree: usize,
) -> Vec<f64> {
    let q = rule(degree);
    let mut b = vec![0.0; v.num_dofs()];
    for cell in 0..v.mesh().num_cells() {
        let geom = v.mesh().cell_geometry(cell);
        let dofs = v.cell_dofs(cell);
        for (w, lam) in cell_points(v, cell, &q) {
            let fx = f(geom.to_physical(lam));
            let phi = v.basis(cell, lam);
            for (&(g, s), p) in dofs.iter().zip(&phi) {
                b[g] += s * w * (fx[0] * p[0] + fx[1] * p[1]);
            }
        }
    }
    b
}

/// `∫ g q` for every pressure DOF.
pub fn assemble_pressure_load(
    p: &(impl PressureDiscretization + ?Sized),
    g: &dyn Fn(Point) -> f64,
) -> Vec<f64> {
    let q = rule(DEFAULT_DEGREE);
    let mesh = p.mesh();
    let mut b = vec![0.0; p.num_dofs()];
    for cell in 0..mesh.num_cells() {
        let geom = mesh.cell_geometry(cell);
        let scale = 2.0 * geom.area;
        for (lam, w) in q.points.iter().zip(&q.weights) {
            let gx = g(geom.to_physical(*lam));
            for (&d, phi) in p.cell_dofs(cell).iter().zip(&p.basis(cell, *lam)) {
                b[d] += scale * w * gx * phi;
            }
        }
    }
    b
}

/// `B[k][j] = ∫ div φ_j q_k` (pressure rows, velocity columns).
pub fn assemble_div(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
) -> CsrMatrix {
    let q = rule(4);
    let mesh = v.mesh();
    let mut t = TripletBuilder::with_capacity(p.num_dofs(), v.num_dofs(), mesh.num_cells() * 36);
    for cell in 0..mesh.num_cells() {
        let mut m = [[0.0; LOCAL_VELOCITY]; LOCAL_PRESSURE];
        for (w, lam) in cell_points(v, cell, &q) {
            let div = v.basis_gradients(cell, lam).map(|g| g[0][0] + g[1][1]);
            let psi = p.basis(cell, lam);
            for k in 0..LOCAL_PRESSURE {
                for j in 0..LOCAL_VELOCITY {
                    m[k][j] += w * psi[k] * div[j];
                }
            }
        }
        let vd = v.cell_dofs(cell);
        for (k, &pk) in p.cell_dofs(cell).iter().enumerate() {
            for (j, &(gj, sj)) in vd.iter().enumerate() {
                t.push(pk, gj, sj * m[k][j]);
            }
        }
    }
    t.build()
}

/// `∫ p q` on the pressure space.
pub fn assemble_pressure_mass(p: &(impl PressureDiscretization + ?Sized)) -> CsrMatrix {
    let q = rule(4);
    let mesh = p.mesh();
    let n = p.num_dofs();
    let mut t = TripletBuilder::with_capacity(n, n, 9 * mesh.num_cells());
    for cell in 0..mesh.num_cells() {
        let scale = 2.0 * mesh.area(cell);
        let dofs = p.cell_dofs(cell);
        let mut m = [[0.0; 3]; 3];
        for (lam, w) in q.points.iter().zip(&q.weights) {
            let b = p.basis(cell, *lam);
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += scale * w * b[i] * b[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                t.push(dofs[i], dofs[j], m[i][j]);
            }
        }
    }
    t.build()
}

/// `c_k = ∫ q_k`, the mean-value functional on the pressure space.
pub fn assemble_constraint(p: &(impl PressureDiscretization + ?Sized)) -> Vec<f64> {
    assemble_pressure_load(p, &|_| 1.0)
}

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("ε² must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
    #[error("the Stokes scheme needs ε² > 0 (use brinkman or darcy for ε = 0)")]
    SingularStokes,
    #[error("the Darcy scheme requires ε² = 0, got {0}")]
    DarcyWithViscosity(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `ε² (∇u, ∇v) − (div v, p)`.
    Stokes,
    /// `ε² (∇u, ∇v) + (u, v) − (div v, p)`.
    Brinkman,
    /// The Brinkman scheme at ε = 0.
    Darcy,
}

/// Forms that do not depend on parameters, assembled once per mesh.
#[derive(Clone, Debug)]
pub struct MixedForms {
    pub gradgrad: CsrMatrix,
    pub mass: CsrMatrix,
    pub div: CsrMatrix,
    pub pressure_mass: CsrMatrix,
    pub constraint: Vec<f64>,
    pub mean_zero: bool,
}

impl MixedForms {
    pub fn assemble(
        v: &(impl VelocityDiscretization + ?Sized),
        p: &(impl PressureDiscretization + ?Sized),
    ) -> Self {
        Self {
            gradgrad: assemble_gradgrad(v),
            mass: assemble_mass(v),
            div: assemble_div(v, p),
            pressure_mass: assemble_pressure_mass(p),
            constraint: assemble_constraint(p),
            mean_zero: p.mean_zero(),
        }
    }
}

/// The discrete saddle-point problem
/// `A u − Bᵀ p = f`, `B u = g` (+ `cᵀ p = 0` when mean-zero).
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub constraint: Option<Vec<f64>>,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    pub eps2: f64,
    pub scheme: Scheme,
    /// Whether `A` is known to be symmetric.
    pub symmetric: bool,
}

pub fn build_system(
    scheme: Scheme,
    eps2: f64,
    forms: &MixedForms,
    rhs_u: Vec<f64>,
    rhs_p: Vec<f64>,
) -> Result<SaddleSystem, AssemblyError> {
    if eps2 < 0.0 || eps2.is_nan() {
        return Err(AssemblyError::NegativeEpsilon(eps2));
    }
    let a = match scheme {
        Scheme::Stokes if eps2 == 0.0 => return Err(AssemblyError::SingularStokes),
        Scheme::Stokes => forms.gradgrad.scaled(eps2),
        Scheme::Darcy if eps2 != 0.0 => return Err(AssemblyError::DarcyWithViscosity(eps2)),
        Scheme::Darcy => forms.mass.clone(),
        Scheme::Brinkman => {
            CsrMatrix::linear_combination(&[(eps2, &forms.gradgrad), (1.0, &forms.mass)])
        }
    };
    Ok(SaddleSystem {
        a,
        b: forms.div.clone(),
        constraint: forms.mean_zero.then(|| forms.constraint.clone()),
        rhs_u,
        rhs_p,
        eps2,
        scheme,
        symmetric: true,
    })
}

/// Adds the Coriolis block `2ω u^⊥` to `A`.
pub fn add_coriolis(
    system: SaddleSystem,
    v: &(impl VelocityDiscretization + ?Sized),
    omega: f64,
) -> SaddleSystem {
    if omega == 0.0 {
        return system;
    }
    let c = assemble_coriolis(v, omega);
    SaddleSystem {
        a: CsrMatrix::linear_combination(&[(1.0, &system.a), (1.0, &c)]),
        symmetric: false,
        ..system
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_square_mesh, DiagonalRule, Triangulation};
    use crate::space::{BoundarySelection, PressureSpace, TaylorHoodSpace, VelocitySpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn cc(n: usize) -> Arc<Triangulation> {
        Arc::new(structured_square_mesh(n, DiagonalRule::CrissCross))
    }

    fn reference() -> Arc<Triangulation> {
        Arc::new(
            Triangulation::new(
                vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                vec![[0, 1, 2]],
                &[],
            )
            .unwrap(),
        )
    }

    fn free_block(m: &CsrMatrix, free: &[usize]) -> faer::Mat<f64> {
        m.submatrix(free, free).to_dense()
    }

    #[test]
    fn gradgrad_properties() {
        let v = VelocitySpace::new(cc(2), &BoundarySelection::All).unwrap();
        let k = assemble_gradgrad(&v);
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
        let dense = free_block(&k, &v.free_dofs());
        let eig = dense.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(eig[0] > 1e-8, "smallest eigenvalue {}", eig[0]);

        let one = VelocitySpace::new(reference(), &BoundarySelection::None).unwrap();
        let u = one.interpolate(&|x| [x[0] * x[0], 0.0]);
        let e = assemble_gradgrad(&one).bilinear(&u, &u);
        assert!((e - 1.0 / 3.0).abs() < 1e-13, "{e}");
    }

    #[test]
    fn mass_properties() {
        let two = Arc::new(structured_square_mesh(1, DiagonalRule::Same));
        let v = VelocitySpace::new(two, &BoundarySelection::None).unwrap();
        let m = assemble_mass(&v);
        let eig = m
            .to_dense()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap();
        assert!(eig[0] > 0.0);
        let u = v.interpolate(&|_| [1.0, 0.0]);
        assert!((m.bilinear(&u, &u) - 1.0).abs() < 1e-13);
        assert_eq!(m.bilinear(&vec![0.0; v.num_dofs()], &u), 0.0);
    }

    #[test]
    fn divergence_matrix() {
        let mesh = cc(2);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::None).unwrap();
        let p = PressureSpace::new(mesh.clone(), false);
        let b = assemble_div(&v, &p);
        let ones = vec![1.0; p.num_dofs()];
        let u = v.interpolate(&|x| [x[0], 0.0]);
        assert!((b.bilinear(&ones, &u) - 1.0).abs() < 1e-13);
        // V_h0 members have zero total divergence
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w: Vec<f64> = (0..v.num_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let v0 = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        for (d, &c) in v0.constrained().iter().enumerate() {
            if c {
                w[d] = 0.0;
            }
        }
        assert!(b.bilinear(&ones, &w).abs() < 1e-12);
        assert!(b.matvec(&vec![0.0; v.num_dofs()]).iter().all(|&x| x == 0.0));

        // (Mp)^{-1} B u reproduces the cellwise divergence
        let mp = assemble_pressure_mass(&p).to_dense();
        let rhs = b.matvec(&w);
        let rhs_mat = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let sol = mp.llt(faer::Side::Lower).unwrap().solve(&rhs_mat);
        use faer::linalg::solvers::Solve;
        let _ = &sol;
        for c in 0..mesh.num_cells() {
            for lam in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5]] {
                let dh: f64 = (0..3).map(|k| sol[(3 * c + k, 0)] * lam[k]).sum();
                assert!((dh - v.evaluate_divergence(&w, c, lam)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn loads_and_linearity() {
        let mesh = cc(2);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        assert!(assemble_load(&v, &|_| [0.0, 0.0]).iter().all(|&x| x == 0.0));
        let f1 = assemble_load(&v, &|x| [0.0, 1.0 - x[1] + 3.0 * x[1] * x[1]]);
        let f2 = assemble_load(&v, &|x| [0.0, 1e4 * (1.0 - x[1] + 3.0 * x[1] * x[1])]);
        let scale = f2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in f1.iter().zip(&f2) {
            assert!((1e4 * a - b).abs() <= 1e-13 * scale);
        }
        let hi = assemble_load_with(&v, &|_| [0.3, -0.2], 10);
        let lo = assemble_load(&v, &|_| [0.3, -0.2]);
        for (a, b) in hi.iter().zip(&lo) {
            assert!((a - b).abs() < 1e-14);
        }
        let p = PressureSpace::new(mesh.clone(), true);
        let c = assemble_constraint(&p);
        for cell in 0..mesh.num_cells() {
            for k in 0..3 {
                assert!((c[3 * cell + k] - mesh.area(cell) / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn convection_and_jacobian() {
        let mesh = cc(2);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let zero = vec![0.0; v.num_dofs()];
        assert_eq!(
            assemble_convection(&v, &zero, ConvectionForm::Convective).max_abs(),
            0.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..v.num_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let d: Vec<f64> = (0..v.num_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        for form in [ConvectionForm::Convective, ConvectionForm::SkewSymmetric] {
            let r = |u: &[f64]| assemble_convection(&v, u, form).matvec(u);
            let h = 1e-6;
            let up: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let um: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a - h * b).collect();
            let fd: Vec<f64> = r(&up)
                .iter()
                .zip(r(&um))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let jac = CsrMatrix::linear_combination(&[
                (1.0, &assemble_convection(&v, &w, form)),
                (1.0, &convection_jacobian(&v, &w, form)),
            ]);
            let an = jac.matvec(&d);
            let scale = an.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (a, b) in fd.iter().zip(&an) {
                assert!((a - b).abs() < 1e-6 * scale, "{form:?}");
            }
        }
        let skew = assemble_convection(&v, &w, ConvectionForm::SkewSymmetric);
        assert!(skew.asymmetry() > 0.0);
        let st = CsrMatrix::linear_combination(&[(1.0, &skew), (1.0, &skew.transpose())]);
        assert!(st.max_abs() < 1e-12 * skew.max_abs());
    }

    #[test]
    fn coriolis_is_skew() {
        let v = VelocitySpace::new(cc(2), &BoundarySelection::All).unwrap();
        let c = assemble_coriolis(&v, 100.0);
        let s = CsrMatrix::linear_combination(&[(1.0, &c), (1.0, &c.transpose())]);
        assert!(s.max_abs() <= 1e-12 * c.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..v.num_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        assert!(c.bilinear(&u, &u).abs() < 1e-10);
    }

    #[test]
    fn system_building() {
        let mesh = cc(1);
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::All).unwrap();
        let p = PressureSpace::new(mesh.clone(), true);
        let forms = MixedForms::assemble(&v, &p);
        let (fu, fp) = (vec![0.0; v.num_dofs()], vec![0.0; p.num_dofs()]);
        let s = build_system(Scheme::Stokes, 1.0, &forms, fu.clone(), fp.clone()).unwrap();
        assert_eq!(s.a, forms.gradgrad);
        assert!(s.constraint.is_some());
        let s = build_system(Scheme::Brinkman, 0.0, &forms, fu.clone(), fp.clone()).unwrap();
        let diff = CsrMatrix::linear_combination(&[(1.0, &s.a), (-1.0, &forms.mass)]);
        assert_eq!(diff.max_abs(), 0.0);
        assert_eq!(
            build_system(Scheme::Stokes, 0.0, &forms, fu.clone(), fp.clone()).unwrap_err(),
            AssemblyError::SingularStokes
        );
        assert!(build_system(Scheme::Darcy, 0.5, &forms, fu.clone(), fp.clone()).is_err());
        let s = build_system(Scheme::Stokes, 1.0, &forms, fu, fp).unwrap();
        let same = add_coriolis(s.clone(), &v, 0.0);
        assert_eq!(same.a, s.a);
        assert!(!add_coriolis(s, &v, 1.0).symmetric);
    }

    #[test]
    fn orientation_flip_invariance() {
        // relabel cells in reverse order: every interior edge changes owner
        let mesh = structured_square_mesh(2, DiagonalRule::CrissCross);
        let cells: Vec<_> = mesh.cells().iter().rev().copied().collect();
        let boundary: Vec<_> = mesh
            .tagged_boundary()
            .iter()
            .map(|&(a, b, t)| (a, b, t.to_string()))
            .collect();
        let flipped =
            Arc::new(Triangulation::new(mesh.vertices().to_vec(), cells, &boundary).unwrap());
        let mesh = Arc::new(mesh);
        let f = |x: Point| [(3.0 * x[0]).sin() * x[1], x[0] * x[0] - x[1]];
        let mut energies = Vec::new();
        for m in [mesh, flipped] {
            let v = VelocitySpace::new(m, &BoundarySelection::None).unwrap();
            let u = v.interpolate(&f);
            energies.push((
                assemble_gradgrad(&v).bilinear(&u, &u),
                assemble_mass(&v).bilinear(&u, &u),
            ));
        }
        assert!((energies[0].0 - energies[1].0).abs() < 1e-12 * energies[0].0);
        assert!((energies[0].1 - energies[1].1).abs() < 1e-12 * energies[0].1);
    }

    #[test]
    fn taylor_hood_forms() {
        let mesh = cc(2);
        let th = TaylorHoodSpace::new(mesh, &BoundarySelection::All, true).unwrap();
        let k = assemble_gradgrad(&th.velocity);
        assert!(k.asymmetry() <= 1e-12 * k.max_abs());
        let u = th.velocity.interpolate(&|x| [x[0], 0.0]);
        let b = assemble_div(&th.velocity, &th.pressure);
        let ones = vec![1.0; th.pressure.num_dofs()];
        assert!((b.bilinear(&ones, &u) - 1.0).abs() < 1e-13);
    }
}
