//! Direct solution of the saddle-point systems and the Navier–Stokes
//! time-stepping drivers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;
use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble_convection, assemble_load, assemble_pressure_load, build_system, convection_jacobian,
    AssemblyError, ConvectionForm, MixedForms, SaddleSystem, Scheme,
};
use crate::element::Vec2;
use crate::mesh::Point;
use crate::space::{PressureDiscretization, VelocityDiscretization};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("singular saddle-point system: {0}")]
    Singular(String),
    #[error(
        "incompatible data: ∫g − ∮u_D·n = {defect:e} but the velocity is prescribed on the whole boundary"
    )]
    Incompatible { defect: f64 },
    #[error("linear residual {0:e} exceeds tolerance")]
    Inaccurate(f64),
    #[error("nonlinear iteration did not converge at t = {time}: residual {residual:e} after {iterations} iterations")]
    NonlinearDivergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// A Picard step that reduces the residual by less than this factor triggers
/// a fresh factorisation.
const PICARD_REFACTOR_RATIO: f64 = 0.25;

/// Free DOFs and pinned pressure of a reduced system.
struct Layout {
    free: Vec<usize>,
    pinned: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub unknowns: usize,
    /// `‖K x − b‖∞ / max(‖b‖∞, ‖K‖∞ ‖x‖∞)` on the reduced system.
    pub relative_residual: f64,
    pub refinement_steps: usize,
    pub symbolic_reused: bool,
}

#[derive(Clone, Debug)]
pub struct MixedSolution {
    /// Full velocity vector, boundary values included.
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Pressure DOF pinned to remove the constant mode before the mean was
    /// restored, if any.
    pub pinned: Option<usize>,
    pub diagnostics: SolveDiagnostics,
}

/// Sparse LU of a square CSR matrix, reusing the symbolic analysis while
/// the sparsity pattern is unchanged.
#[derive(Default)]
pub struct DirectSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

/// One numeric factorisation plus the matrix it came from.
pub struct Factorization {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
    pub reused: bool,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Factors `m`. The CSR arrays of `m` are read as the CSC arrays of
    /// `mᵀ`, whose factorisation then solves with `m` by transposition.
    pub fn factor(&mut self, m: &CsrMatrix) -> Result<Factorization, SolverError> {
        assert_eq!(m.nrows(), m.ncols());
        let (indptr, indices, data) = m.raw();
        let symbolic =
            SymbolicSparseColMatRef::new_checked(m.nrows(), m.ncols(), indptr, None, indices);
        let reused = matches!(&self.symbolic, Some((p, i, _)) if p == indptr && i == indices);
        if !reused {
            let sym = SymbolicLu::try_new(symbolic)
                .map_err(|e| SolverError::Singular(format!("symbolic analysis failed: {e:?}")))?;
            self.symbolic = Some((indptr.to_vec(), indices.to_vec(), sym));
        }
        let sym = self.symbolic.as_ref().expect("set above").2.clone();
        let lu = Lu::try_new_with_symbolic(sym, SparseColMatRef::new(symbolic, data))
            .map_err(|e| SolverError::Singular(format!("numeric factorization failed: {e:?}")))?;
        Ok(Factorization {
            matrix: m.clone(),
            lu,
            reused,
        })
    }
}

impl Factorization {
    /// One forward/backward substitution.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let r = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve_transpose(&r);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves with iterative refinement; returns the solution, the relative
    /// residual and the number of refinement steps.
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64, usize) {
        let apply = |rhs: &[f64]| self.apply(rhs);
        let mut x = apply(b);
        let norm_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let norm_m = self.matrix.max_abs();
        let mut rel = f64::INFINITY;
        let mut steps = 0;
        for k in 0..=3 {
            let kx = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&kx).map(|(a, c)| a - c).collect();
            let norm_x = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = norm_b.max(norm_m * norm_x).max(f64::MIN_POSITIVE);
            rel = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
            steps = k;
            if !rel.is_finite() || rel <= 1e-14 || k == 3 {
                break;
            }
            let dx = apply(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        (x, rel, steps)
    }
}

/// Dirichlet data: which velocity DOFs are fixed and their values.
#[derive(Clone, Debug)]
pub struct Constraints<'a> {
    pub constrained: &'a [bool],
    pub values: &'a [f64],
}

/// Solves `A u − Bᵀ p = f`, `B u = g` (+ `cᵀ p = 0`) with the constrained
/// velocity DOFs fixed to `bc.values`. The constraint is only enforced when
/// constants lie in the kernel of `Bᵀ`; otherwise the pressure is unique.
pub fn solve_saddle(
    system: &SaddleSystem,
    bc: &Constraints<'_>,
    solver: &mut DirectSolver,
) -> Result<MixedSolution, SolverError> {
    let reduced = Reduced::new(system, bc)?;
    let fact = solver.factor(&reduced.kkt)?;
    let (x, rel, steps) = fact.solve(&reduced.rhs);
    reduced.finish(system, bc, &x, rel, steps, fact.reused)
}

/// The saddle-point system restricted to the free velocity DOFs, with the
/// constant pressure mode removed if necessary.
struct Reduced {
    free: Vec<usize>,
    pinned: Option<usize>,
    kkt: CsrMatrix,
    rhs: Vec<f64>,
}

impl Reduced {
    fn new(system: &SaddleSystem, bc: &Constraints<'_>) -> Result<Self, SolverError> {
        let nu = system.a.nrows();
        let np = system.b.nrows();
        let free: Vec<usize> = (0..nu).filter(|&d| !bc.constrained[d]).collect();
        let mut index = vec![usize::MAX; nu];
        for (k, &d) in free.iter().enumerate() {
            index[d] = k;
        }
        let nf = free.len();
        let n = nf + np;

        // right-hand side with the lifting moved over
        let au_d = system.a.matvec(&masked(bc.values, bc.constrained, true));
        let bu_d = system.b.matvec(&masked(bc.values, bc.constrained, true));
        let mut rhs = vec![0.0; n];
        for (k, &d) in free.iter().enumerate() {
            rhs[k] = system.rhs_u[d] - au_d[d];
        }
        for q in 0..np {
            rhs[nf + q] = -(system.rhs_p[q] - bu_d[q]);
        }

        // constant pressures annihilate B on free DOFs when the whole boundary
        // is prescribed; then the data must be compatible
        let ones = vec![1.0; np];
        let bt1 = system.b.matvec_transpose(&ones);
        let b_scale = system.b.max_abs().max(f64::MIN_POSITIVE);
        let mut pinned = None;
        if free.iter().all(|&d| bt1[d].abs() <= 1e-10 * b_scale) {
            let total: f64 = (0..np).map(|q| system.rhs_p[q] - bu_d[q]).sum();
            let scale: f64 = (0..np)
                .map(|q| system.rhs_p[q].abs() + bu_d[q].abs())
                .sum::<f64>();
            if total.abs() > 1e-9 * scale.max(1e-300) && total.abs() > 1e-13 {
                return Err(SolverError::Incompatible { defect: total });
            }
            let Some(c) = &system.constraint else {
                return Err(SolverError::Singular(
                    "constant pressures are in the kernel; use the mean-zero pressure space".into(),
                ));
            };
            // A dense constraint row would make the LU fill dense. Instead the
            // constant mode is removed by fixing one pressure DOF (its equation
            // is implied by the others for compatible data) and the mean is
            // restored afterwards.
            pinned = (0..np).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()));
        }
        if let Some(q) = pinned {
            rhs[nf + q] = 0.0;
        }

        // rows are emitted in column order, so no sorting is needed
        let bt = system.b.transpose();
        let kkt = CsrMatrix::from_rows(n, n, |r| -> Vec<(usize, f64)> {
            if r < nf {
                let d = free[r];
                let (ac, av) = system.a.row(d);
                let (bc, bv) = bt.row(d);
                let a_part = ac
                    .iter()
                    .zip(av)
                    .filter(|(&c, _)| index[c] != usize::MAX)
                    .map(|(&c, &v)| (index[c], v));
                let b_part = bc
                    .iter()
                    .zip(bv)
                    .filter(|(&q, _)| Some(q) != pinned)
                    .map(|(&q, &v)| (nf + q, -v));
                a_part.chain(b_part).collect()
            } else if Some(r - nf) == pinned {
                vec![(r, b_scale)]
            } else {
                let (bc, bv) = system.b.row(r - nf);
                bc.iter()
                    .zip(bv)
                    .filter(|(&c, _)| index[c] != usize::MAX)
                    .map(|(&c, &v)| (index[c], -v))
                    .collect()
            }
        });
        Ok(Self {
            free,
            pinned,
            kkt,
            rhs,
        })
    }

    fn finish(
        &self,
        system: &SaddleSystem,
        bc: &Constraints<'_>,
        x: &[f64],
        rel: f64,
        steps: usize,
        reused: bool,
    ) -> Result<MixedSolution, SolverError> {
        if !rel.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Singular(hint(system)));
        }
        if rel > 1e-8 {
            return Err(SolverError::Inaccurate(rel));
        }
        if rel > RESIDUAL_TOLERANCE {
            log::warn!("saddle-point residual {rel:e} above {RESIDUAL_TOLERANCE:e}");
        }
        let nf = self.free.len();
        let mut velocity = masked(bc.values, bc.constrained, true);
        for (k, &d) in self.free.iter().enumerate() {
            velocity[d] = x[k];
        }
        let mut pressure = x[nf..].to_vec();
        if self.pinned.is_some() {
            if let Some(c) = &system.constraint {
                remove_mean(&mut pressure, c);
            }
        }
        Ok(MixedSolution {
            velocity,
            pressure,
            pinned: self.pinned,
            diagnostics: SolveDiagnostics {
                unknowns: x.len(),
                relative_residual: rel,
                refinement_steps: steps,
                symbolic_reused: reused,
            },
        })
    }
}

/// Shifts `p` by a constant so that `cᵀ p = 0`.
fn remove_mean(p: &mut [f64], c: &[f64]) {
    let shift = dot(c, p) / c.iter().sum::<f64>();
    p.iter_mut().for_each(|x| *x -= shift);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hint(system: &SaddleSystem) -> String {
    match (system.scheme, system.eps2, &system.constraint) {
        (Scheme::Stokes, e, _) if e == 0.0 => "Stokes scheme with ε² = 0".into(),
        (_, _, None) => "no mean-zero constraint on the pressure".into(),
        _ => "check boundary conditions and mesh".into(),
    }
}

/// Copy of `values` keeping only entries whose mask equals `keep`.
fn masked(values: &[f64], mask: &[bool], keep: bool) -> Vec<f64> {
    values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m == keep { v } else { 0.0 })
        .collect()
}

/// Boundary data per point and boundary tag.
pub type BoundaryData<'a> = &'a dyn Fn(Point, &str) -> Vec2;

/// Data of a linear problem.
pub struct LinearProblem<'a> {
    pub scheme: Scheme,
    pub eps2: f64,
    pub f: &'a dyn Fn(Point) -> Vec2,
    pub g: &'a dyn Fn(Point) -> f64,
    /// Velocity on Dirichlet edges; `None` for homogeneous data.
    pub boundary: Option<BoundaryData<'a>>,
    /// Angular speed of the Coriolis term `2ω × u`.
    pub omega: f64,
}

pub fn solve_linear(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    forms: &MixedForms,
    problem: &LinearProblem<'_>,
) -> Result<MixedSolution, SolverError> {
    let rhs_u = assemble_load(v, problem.f);
    let rhs_p = assemble_pressure_load(p, problem.g);
    let mut system = build_system(problem.scheme, problem.eps2, forms, rhs_u, rhs_p)?;
    if problem.omega != 0.0 {
        system = crate::assembly::add_coriolis(system, v, problem.omega);
    }
    let values = match problem.boundary {
        Some(g) => v.lift(g),
        None => vec![0.0; v.num_dofs()],
    };
    solve_saddle(
        &system,
        &Constraints {
            constrained: v.constrained(),
            values: &values,
        },
        &mut DirectSolver::new(),
    )
}

/// Stokes: `ε² (∇u, ∇v) − (div v, p) = ⟨f, v⟩`, `(div u, q) = ⟨g, q⟩`.
pub fn solve_stokes(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    forms: &MixedForms,
    eps2: f64,
    f: &dyn Fn(Point) -> Vec2,
    g: &dyn Fn(Point) -> f64,
    boundary: Option<BoundaryData<'_>>,
) -> Result<MixedSolution, SolverError> {
    solve_linear(
        v,
        p,
        forms,
        &LinearProblem {
            scheme: Scheme::Stokes,
            eps2,
            f,
            g,
            boundary,
            omega: 0.0,
        },
    )
}

/// Brinkman (Darcy for ε² = 0).
pub fn solve_brinkman(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    forms: &MixedForms,
    eps2: f64,
    f: &dyn Fn(Point) -> Vec2,
    g: &dyn Fn(Point) -> f64,
) -> Result<MixedSolution, SolverError> {
    let scheme = if eps2 == 0.0 {
        Scheme::Darcy
    } else {
        Scheme::Brinkman
    };
    solve_linear(
        v,
        p,
        forms,
        &LinearProblem {
            scheme,
            eps2,
            f,
            g,
            boundary: None,
            omega: 0.0,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    CrankNicolsonNewton,
    BackwardEulerPicard,
    /// Crank–Nicolson with Picard linearisation.
    CrankNicolsonPicard,
    /// Backward Euler with Newton linearisation.
    BackwardEulerNewton,
}

impl TimeScheme {
    pub fn theta(self) -> f64 {
        match self {
            Self::CrankNicolsonNewton | Self::CrankNicolsonPicard => 0.5,
            Self::BackwardEulerPicard | Self::BackwardEulerNewton => 1.0,
        }
    }

    fn newton(self) -> bool {
        matches!(self, Self::CrankNicolsonNewton | Self::BackwardEulerNewton)
    }
}

impl std::str::FromStr for TimeScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "crank-nicolson-newton" | "cn-newton" => Ok(Self::CrankNicolsonNewton),
            "backward-euler-picard" | "be-picard" => Ok(Self::BackwardEulerPicard),
            "crank-nicolson-picard" | "cn-picard" => Ok(Self::CrankNicolsonPicard),
            "backward-euler-newton" | "be-newton" => Ok(Self::BackwardEulerNewton),
            _ => Err(format!("unknown time scheme `{s}`")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransientConfig {
    pub dt: f64,
    pub final_time: f64,
    pub scheme: TimeScheme,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub convection: ConvectionForm,
    /// Stop once `‖u^{n+1} − u^n‖₀ / dt` falls below this value.
    pub steady_tolerance: Option<f64>,
}

impl TransientConfig {
    pub fn new(dt: f64, final_time: f64, scheme: TimeScheme) -> Self {
        Self {
            dt,
            final_time,
            scheme,
            tolerance: 1e-10,
            max_iterations: 50,
            convection: ConvectionForm::Convective,
            steady_tolerance: None,
        }
    }

    fn validate(&self) -> Result<usize, SolverError> {
        if !(self.dt > 0.0)
            || !(self.final_time >= 0.0)
            || !(self.tolerance > 0.0)
            || self.max_iterations == 0
        {
            return Err(SolverError::Config(format!(
                "need dt > 0, final time ≥ 0, tolerance > 0 and max iterations ≥ 1 (got {self:?})"
            )));
        }
        Ok((self.final_time / self.dt - 1e-9).ceil().max(0.0) as usize)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `‖u^{n+1} − u^n‖₀ / dt`.
    pub rate_of_change: f64,
    /// `max_T ‖div u_h‖_{0,T}` over cells.
    pub divergence: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub final_solution: MixedSolution,
    pub time: f64,
    pub steps: Vec<StepRecord>,
    pub steady: bool,
}

/// Time-dependent data of a Navier–Stokes problem.
pub struct NavierStokesProblem<'a> {
    pub eps2: f64,
    pub f: &'a dyn Fn(Point, f64) -> Vec2,
    /// Velocity on Dirichlet edges at time `t`.
    pub boundary: &'a dyn Fn(Point, &str, f64) -> Vec2,
    pub initial: &'a dyn Fn(Point) -> Vec2,
}

/// `∂u/∂t − ε²Δu + (u·∇)u + ∇p = f`, `div u = 0`.
///
/// θ-scheme in time (θ = 1/2 or 1) with the pressure taken at the new
/// time level for backward Euler and at the half step for Crank–Nicolson.
/// Each step iterates Picard or Newton linearisations until the free
/// residual satisfies `‖R‖∞ ≤ tol · max(1, ‖rhs‖∞)`. Newton refactors at
/// every iteration; Picard reuses the last factorisation as long as each
/// update contracts the residual by at least a factor of four.
pub fn solve_navier_stokes(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    forms: &MixedForms,
    problem: &NavierStokesProblem<'_>,
    config: &TransientConfig,
    mut on_step: impl FnMut(&StepRecord, &[f64], &[f64]),
) -> Result<Trajectory, SolverError> {
    let nsteps = config.validate()?;
    let (dt, theta, eps2) = (config.dt, config.scheme.theta(), problem.eps2);
    let nu = v.num_dofs();
    let constrained = v.constrained();
    let free: Vec<usize> = (0..nu).filter(|&d| !constrained[d]).collect();

    // initial velocity: interpolant, with boundary DOFs from the boundary data
    let mut u = v.interpolate(problem.initial);
    let lift0 = v.lift(&|x, tag| (problem.boundary)(x, tag, 0.0));
    for d in 0..nu {
        if constrained[d] {
            u[d] = lift0[d];
        }
    }
    let mut pres = vec![0.0; p.num_dofs()];
    let mut pinned = None;
    let mut u_prev: Option<Vec<f64>> = None;
    let lin =
        CsrMatrix::linear_combination(&[(1.0 / dt, &forms.mass), (theta * eps2, &forms.gradgrad)]);
    let zero_p = vec![0.0; p.num_dofs()];
    let mut solver = DirectSolver::new();
    let mut frozen: Option<(Factorization, Layout)> = None;
    let mut records = Vec::with_capacity(nsteps);
    let mut diagnostics = SolveDiagnostics::default();
    let mut time = 0.0;
    let mut steady = false;
    let mut f_old = assemble_load(v, &|x| (problem.f)(x, 0.0));
    let mut n_old = (theta < 1.0).then(|| assemble_convection(v, &u, config.convection).matvec(&u));

    for step in 1..=nsteps {
        let t_new = (step as f64 * dt).min(config.final_time);
        let f_new = assemble_load(v, &|x| (problem.f)(x, t_new));
        // explicit part: (M/dt − (1−θ) ε² K) u_n − (1−θ) N(u_n) u_n + θ f_{n+1} + (1−θ) f_n
        let mu = forms.mass.matvec(&u);
        let ku = forms.gradgrad.matvec(&u);
        let mut rhs_base: Vec<f64> = (0..nu)
            .map(|d| {
                mu[d] / dt - (1.0 - theta) * eps2 * ku[d]
                    + theta * f_new[d]
                    + (1.0 - theta) * f_old[d]
            })
            .collect();
        if let Some(nu_old) = &n_old {
            rhs_base
                .iter_mut()
                .zip(nu_old)
                .for_each(|(r, n)| *r -= (1.0 - theta) * n);
        }
        let values = v.lift(&|x, tag| (problem.boundary)(x, tag, t_new));
        // linear extrapolation in time as the first iterate
        let mut w: Vec<f64> = match &u_prev {
            Some(prev) => u.iter().zip(prev).map(|(a, b)| 2.0 * a - b).collect(),
            None => u.clone(),
        };
        for d in 0..nu {
            if constrained[d] {
                w[d] = values[d];
            }
        }
        let bc = Constraints {
            constrained,
            values: &values,
        };

        let mut iterations = 0;
        let mut residual;
        let mut last_residual = f64::INFINITY;
        loop {
            let n_w = assemble_convection(v, &w, config.convection);
            let a = CsrMatrix::linear_combination(&[(1.0, &lin), (theta, &n_w)]);
            // residual of the nonlinear system at (w, pres)
            let aw = a.matvec(&w);
            let btp = forms.div.matvec_transpose(&pres);
            let bw = forms.div.matvec(&w);
            let scale = free.iter().fold(1.0f64, |m, &d| m.max(rhs_base[d].abs()));
            residual = free
                .iter()
                .fold(0.0f64, |m, &d| m.max((aw[d] - btp[d] - rhs_base[d]).abs()))
                / scale;
            let div_res = bw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if iterations > 0 && residual <= config.tolerance && div_res <= config.tolerance * scale
            {
                break;
            }
            if iterations >= config.max_iterations {
                return Err(SolverError::NonlinearDivergence {
                    time: t_new,
                    iterations,
                    residual,
                });
            }
            // Picard keeps the last factorisation while it still contracts
            // the residual well; the converged solution is the same.
            let contracting = residual <= PICARD_REFACTOR_RATIO * last_residual;
            let reuse = frozen
                .as_ref()
                .filter(|_| !config.scheme.newton() && contracting);
            if let Some((fact, layout)) = reuse {
                let nf = layout.free.len();
                let mut r = vec![0.0; nf + bw.len()];
                for (k, &d) in layout.free.iter().enumerate() {
                    r[k] = rhs_base[d] - aw[d] + btp[d];
                }
                for (q, &b) in bw.iter().enumerate() {
                    if Some(q) != layout.pinned {
                        r[nf + q] = b;
                    }
                }
                let dx = fact.apply(&r);
                for (k, &d) in layout.free.iter().enumerate() {
                    w[d] += dx[k];
                }
                pres.iter_mut().zip(&dx[nf..]).for_each(|(p, d)| *p += d);
            } else {
                let (matrix, rhs) = if config.scheme.newton() {
                    let j = convection_jacobian(v, &w, config.convection);
                    let jw = j.matvec(&w);
                    let rhs: Vec<f64> = rhs_base
                        .iter()
                        .zip(&jw)
                        .map(|(r, x)| r + theta * x)
                        .collect();
                    (
                        CsrMatrix::linear_combination(&[(1.0, &a), (theta, &j)]),
                        rhs,
                    )
                } else {
                    (a, rhs_base.clone())
                };
                let system = SaddleSystem {
                    a: matrix,
                    b: forms.div.clone(),
                    constraint: forms.mean_zero.then(|| forms.constraint.clone()),
                    rhs_u: rhs,
                    rhs_p: zero_p.clone(),
                    eps2,
                    scheme: Scheme::Stokes,
                    symmetric: false,
                };
                let reduced = Reduced::new(&system, &bc)?;
                let fact = solver.factor(&reduced.kkt)?;
                let (x, rel, steps) = fact.solve(&reduced.rhs);
                let sol = reduced.finish(&system, &bc, &x, rel, steps, fact.reused)?;
                w = sol.velocity;
                pres = sol.pressure;
                pinned = sol.pinned;
                diagnostics = sol.diagnostics;
                frozen = Some((
                    fact,
                    Layout {
                        free: reduced.free,
                        pinned: reduced.pinned,
                    },
                ));
            }
            last_residual = residual;
            iterations += 1;
            debug!("t = {t_new:.4}: iteration {iterations}, residual {residual:.3e}");
        }
        if pinned.is_some() {
            remove_mean(&mut pres, &forms.constraint);
        }

        let du: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - b).collect();
        let change = forms.mass.bilinear(&du, &du).max(0.0).sqrt() / dt;
        u_prev = Some(std::mem::replace(&mut u, w));
        time = t_new;
        f_old = f_new;
        if theta < 1.0 {
            n_old = Some(assemble_convection(v, &u, config.convection).matvec(&u));
        }
        let record = StepRecord {
            step,
            time,
            iterations,
            residual,
            rate_of_change: change,
            divergence: max_cell_divergence(v, &u),
        };
        on_step(&record, &u, &pres);
        records.push(record);
        if step % 50 == 0 {
            info!("t = {time:.3}, ‖∂u/∂t‖ ≈ {change:.3e}");
        }
        if let Some(tol) = config.steady_tolerance {
            if change <= tol {
                steady = true;
                break;
            }
        }
    }
    Ok(Trajectory {
        final_solution: MixedSolution {
            velocity: u,
            pressure: pres,
            pinned,
            diagnostics,
        },
        time,
        steps: records,
        steady,
    })
}

/// `max_T ‖div u‖_{0,T}`.
pub fn max_cell_divergence(v: &(impl VelocityDiscretization + ?Sized), u: &[f64]) -> f64 {
    let q = crate::quadrature::quadrature_triangle(4).expect("degree 4");
    (0..v.mesh().num_cells())
        .map(|c| {
            let s = 2.0 * v.mesh().area(c);
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(l, w)| s * w * v.evaluate_divergence(u, c, *l).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}
