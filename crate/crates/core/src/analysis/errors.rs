//! Error norms against exact solutions and observed convergence rates.

use serde::{Deserialize, Serialize};

use crate::element::{Mat2, Vec2};
use crate::mesh::Point;
use crate::quadrature::quadrature_triangle;
use crate::space::{PressureDiscretization, VelocityDiscretization};

/// Quadrature degree for all error integrals.
pub const ERROR_DEGREE: usize = 10;

/// An exact solution: velocity, its gradient (row `c` = ∇u_c) and pressure.
pub struct ExactSolution<'a> {
    pub u: &'a dyn Fn(Point) -> Vec2,
    pub grad_u: &'a dyn Fn(Point) -> Mat2,
    pub p: Option<&'a dyn Fn(Point) -> f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub h: f64,
    pub velocity_l2: f64,
    /// Broken seminorm `|u − u_h|_{1,h}`.
    pub velocity_h1: f64,
    pub divergence_l2: f64,
    /// `‖(p − p̄) − (p_h − p̄_h)‖₀`; pressures are compared modulo constants.
    pub pressure_l2: Option<f64>,
    /// `sqrt(ε²|e|²_{1,h} + ‖e‖²₀ + ‖div e‖²₀)`.
    pub energy: f64,
    /// `‖u_h‖_{1,h}`, the scale used by divergence checks.
    pub discrete_h1_norm: f64,
    /// `‖div u_h‖₀`.
    pub discrete_divergence: f64,
}

/// Cellwise quadrature of all error norms at degree [`ERROR_DEGREE`].
pub fn compute_errors(
    v: &(impl VelocityDiscretization + ?Sized),
    p: &(impl PressureDiscretization + ?Sized),
    u_h: &[f64],
    p_h: Option<&[f64]>,
    exact: &ExactSolution<'_>,
    eps2: f64,
) -> ErrorReport {
    let mesh = v.mesh();
    let rule = quadrature_triangle(ERROR_DEGREE).expect("supported degree");
    let (mut l2, mut h1, mut div, mut norm_h1, mut div_h) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in 0..mesh.num_cells() {
        let geom = mesh.cell_geometry(c);
        let s = 2.0 * geom.area;
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let x = geom.to_physical(*lambda);
            let wq = s * w;
            let uh = v.evaluate(u_h, c, *lambda);
            let gh = v.evaluate_gradient(u_h, c, *lambda);
            let u = (exact.u)(x);
            let g = (exact.grad_u)(x);
            l2 += wq * ((u[0] - uh[0]).powi(2) + (u[1] - uh[1]).powi(2));
            let mut gg = 0.0;
            for r in 0..2 {
                for k in 0..2 {
                    gg += (g[r][k] - gh[r][k]).powi(2);
                    norm_h1 += wq * gh[r][k].powi(2);
                }
            }
            h1 += wq * gg;
            norm_h1 += wq * (uh[0].powi(2) + uh[1].powi(2));
            let dh = gh[0][0] + gh[1][1];
            div += wq * (g[0][0] + g[1][1] - dh).powi(2);
            div_h += wq * dh * dh;
        }
    }
    let pressure_l2 = match (exact.p, p_h) {
        (Some(pf), Some(ph)) => Some(pressure_error(p, ph, pf, &rule)),
        _ => None,
    };
    ErrorReport {
        h: mesh.mesh_size(),
        velocity_l2: l2.sqrt(),
        velocity_h1: h1.sqrt(),
        divergence_l2: div.sqrt(),
        pressure_l2,
        energy: (eps2 * h1 + l2 + div).sqrt(),
        discrete_h1_norm: norm_h1.sqrt(),
        discrete_divergence: div_h.sqrt(),
    }
}

/// `‖(p − p_h) − mean(p − p_h)‖₀`, in two passes for accuracy.
fn pressure_error(
    p: &(impl PressureDiscretization + ?Sized),
    ph: &[f64],
    pf: &dyn Fn(Point) -> f64,
    rule: &crate::quadrature::TriangleRule,
) -> f64 {
    let mesh = p.mesh();
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        let mut sum = 0.0;
        for c in 0..mesh.num_cells() {
            let geom = mesh.cell_geometry(c);
            for (lambda, w) in rule.points.iter().zip(&rule.weights) {
                let e = pf(geom.to_physical(*lambda)) - p.evaluate(ph, c, *lambda);
                sum += 2.0 * geom.area * w * f(e);
            }
        }
        sum
    };
    let mean = integrate(&|e| e) / mesh.total_area();
    integrate(&|e| (e - mean).powi(2)).sqrt()
}

/// `‖div u_h‖₀` and `‖u_h‖_{1,h}`.
pub fn divergence_and_norm(v: &(impl VelocityDiscretization + ?Sized), u_h: &[f64]) -> (f64, f64) {
    let zero = |_: Point| [0.0, 0.0];
    let zero_grad = |_: Point| [[0.0, 0.0], [0.0, 0.0]];
    let exact = ExactSolution {
        u: &zero,
        grad_u: &zero_grad,
        p: None,
    };
    let mesh = v.mesh();
    let p = NoPressure(mesh);
    let r = compute_errors(v, &p, u_h, None, &exact, 0.0);
    (r.discrete_divergence, r.discrete_h1_norm)
}

struct NoPressure<'m>(&'m crate::mesh::Triangulation);

impl PressureDiscretization for NoPressure<'_> {
    fn mesh(&self) -> &crate::mesh::Triangulation {
        self.0
    }
    fn num_dofs(&self) -> usize {
        0
    }
    fn cell_dofs(&self, _: usize) -> [usize; 3] {
        unreachable!("no pressure DOFs")
    }
    fn mean_zero(&self) -> bool {
        false
    }
    fn interpolate(&self, _: &dyn Fn(Point) -> f64) -> Vec<f64> {
        Vec::new()
    }
}

/// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive levels;
/// `None` where an error vanishes or the sizes do not decrease.
pub fn convergence_rates(levels: &[(f64, f64)]) -> Vec<Option<f64>> {
    levels
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            (e0 > 0.0 && e1 > 0.0 && h0 > h1 && h1 > 0.0).then(|| (e0 / e1).ln() / (h0 / h1).ln())
        })
        .collect()
}

/// Rate between the first and last level.
pub fn average_rate(levels: &[(f64, f64)]) -> Option<f64> {
    match (levels.first(), levels.last()) {
        (Some(&a), Some(&b)) if levels.len() >= 2 => convergence_rates(&[a, b])[0],
        _ => None,
    }
}

/// Rows of an error table: one report per level and per-pair rates.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub levels: Vec<ErrorReport>,
}

impl ConvergenceTable {
    pub fn rates(&self, field: impl Fn(&ErrorReport) -> Option<f64>) -> Vec<Option<f64>> {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .map(|r| (r.h, field(r).unwrap_or(f64::NAN)))
            .collect();
        convergence_rates(&pts)
    }

    /// CSV with one row per level; rates refer to the previous level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,h,velocity_l2,rate_l2,velocity_h1,rate_h1,divergence_l2,pressure_l2,rate_pressure,energy,rate_energy\n",
        );
        let l2 = self.rates(|r| Some(r.velocity_l2));
        let h1 = self.rates(|r| Some(r.velocity_h1));
        let pr = self.rates(|r| r.pressure_l2);
        let en = self.rates(|r| Some(r.energy));
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
        for (i, r) in self.levels.iter().enumerate() {
            let prev = |v: &[Option<f64>]| if i == 0 { None } else { v[i - 1] };
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{},{:.6e},{},{:.6e},{},{},{:.6e},{}\n",
                i,
                r.h,
                r.velocity_l2,
                fmt(prev(&l2)),
                r.velocity_h1,
                fmt(prev(&h1)),
                r.divergence_l2,
                r.pressure_l2
                    .map(|v| format!("{v:.6e}"))
                    .unwrap_or_default(),
                fmt(prev(&pr)),
                r.energy,
                fmt(prev(&en)),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_square_mesh, DiagonalRule};
    use crate::space::{BoundarySelection, PressureSpace, VelocitySpace};
    use std::sync::Arc;

    #[test]
    fn rates_of_simple_sequences() {
        let r = convergence_rates(&[(1.0, 1.0), (0.5, 0.25), (0.25, 0.125)]);
        assert!((r[0].unwrap() - 2.0).abs() < 1e-14);
        assert!((r[1].unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(convergence_rates(&[(1.0, 1.0), (0.5, 0.0)]), vec![None]);
        let r = convergence_rates(&[(2.0, 3.848e-2), (1.0, 2.529e-2)])[0].unwrap();
        assert!((r - 0.6056).abs() < 1e-3);
        assert!(
            (average_rate(&[(1.0, 1.0), (0.5, 0.3), (0.25, 1.0 / 16.0)]).unwrap() - 2.0).abs()
                < 1e-14
        );
    }

    #[test]
    fn exact_discrete_field_has_zero_error() {
        let mesh = Arc::new(structured_square_mesh(2, DiagonalRule::Alternating));
        let v = VelocitySpace::new(mesh.clone(), &BoundarySelection::None).unwrap();
        let p = PressureSpace::new(mesh, false);
        let u = |x: Point| [x[0] * x[1] - x[1] * x[1], 0.5 * x[0] * x[0] + x[1]];
        let g = |x: Point| [[x[1], x[0] - 2.0 * x[1]], [x[0], 1.0]];
        let pf = |x: Point| 3.0 * x[0] - x[1] + 7.0;
        let uh = v.interpolate(&u);
        let ph = p.interpolate(&|x| pf(x) - 100.0);
        let r = compute_errors(
            &v,
            &p,
            &uh,
            Some(&ph),
            &ExactSolution {
                u: &u,
                grad_u: &g,
                p: Some(&pf),
            },
            1.0,
        );
        assert!(r.velocity_l2 < 1e-12 && r.velocity_h1 < 1e-12 && r.divergence_l2 < 1e-12);
        assert!(r.pressure_l2.unwrap() < 1e-12);
        // ‖div u_h‖ for div u = 2 + x - ... : compare with the exact integral
        let (d, n) = divergence_and_norm(&v, &uh);
        assert!(n > 0.0);
        // div u = y + 1 on the unit square: ∫(y+1)² = 7/3
        assert!((d * d - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_rates() {
        let mk = |h: f64| ErrorReport {
            h,
            velocity_l2: h * h,
            velocity_h1: h,
            energy: h,
            ..Default::default()
        };
        let t = ConvergenceTable {
            levels: vec![mk(0.5), mk(0.25)],
        };
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().contains(",2.0000,"));
    }
}
