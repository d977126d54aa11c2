//! Data and exact solutions of the numerical examples.

use std::f64::consts::PI;

use crate::element::{Mat2, Vec2};
use crate::mesh::Point;

type Field<T> = Box<dyn Fn(Point) -> T + Send + Sync>;
type TimeField<T> = Box<dyn Fn(Point, f64) -> T + Send + Sync>;

/// A steady problem with known solution: `f` is the matching load.
pub struct SteadySolution {
    pub u: Field<Vec2>,
    pub grad_u: Field<Mat2>,
    pub p: Field<f64>,
    pub f: Field<Vec2>,
}

/// No flow: `u = 0` driven by a pure gradient of size `ra`.
pub fn no_flow(ra: f64) -> SteadySolution {
    SteadySolution {
        u: Box::new(|_| [0.0, 0.0]),
        grad_u: Box::new(|_| [[0.0, 0.0], [0.0, 0.0]]),
        p: Box::new(move |x| {
            let y = x[1];
            ra * (y.powi(3) - y * y / 2.0 + y - 7.0 / 12.0)
        }),
        f: Box::new(move |x| [0.0, ra * (1.0 - x[1] + 3.0 * x[1] * x[1])]),
    }
}

/// Smooth vortex on the unit square with `p = 2/π − sin(πx)`, for
/// `−ε²Δu + σu + ∇p = f` (σ = 1 Brinkman, σ = 0 Stokes).
pub fn smooth_vortex(eps2: f64, sigma: f64) -> SteadySolution {
    let u = |x: Point| {
        let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
        [
            PI * sx * sx * (2.0 * PI * x[1]).sin(),
            -PI * sy * sy * (2.0 * PI * x[0]).sin(),
        ]
    };
    SteadySolution {
        u: Box::new(u),
        grad_u: Box::new(|x| {
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
            let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
            let pi2 = PI * PI;
            [
                [pi2 * s2x * s2y, 2.0 * pi2 * sx * sx * c2y],
                [-2.0 * pi2 * sy * sy * c2x, -pi2 * s2x * s2y],
            ]
        }),
        p: Box::new(|x| 2.0 / PI - (PI * x[0]).sin()),
        f: Box::new(move |x| {
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (s2x, s2y) = ((2.0 * PI * x[0]).sin(), (2.0 * PI * x[1]).sin());
            let (c2x, c2y) = ((2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).cos());
            let pi3 = PI.powi(3);
            let lap = [
                pi3 * (2.0 * c2x * s2y - 4.0 * sx * sx * s2y),
                -pi3 * (2.0 * c2y * s2x - 4.0 * sy * sy * s2x),
            ];
            let uu = u(x);
            [
                -eps2 * lap[0] + sigma * uu[0] - PI * (PI * x[0]).cos(),
                -eps2 * lap[1] + sigma * uu[1],
            ]
        }),
    }
}

/// Brinkman solution with a boundary layer of width `eps` along `x = 0`,
/// `y = 0`: `u = (−x, y) e^{−xy/ε}`, `p = −ε e^{−x/ε}`.
pub fn boundary_layer(eps: f64) -> SteadySolution {
    assert!(eps > 0.0, "the layer solution needs ε > 0");
    SteadySolution {
        u: Box::new(move |x| {
            let e = (-x[0] * x[1] / eps).exp();
            [-x[0] * e, x[1] * e]
        }),
        grad_u: Box::new(move |x| {
            let (a, b) = (x[0], x[1]);
            let e = (-a * b / eps).exp();
            [
                [(-1.0 + a * b / eps) * e, a * a / eps * e],
                [-b * b / eps * e, (1.0 - a * b / eps) * e],
            ]
        }),
        p: Box::new(move |x| -eps * (-x[0] / eps).exp()),
        f: Box::new(move |x| {
            let (a, b) = (x[0], x[1]);
            let e = (-a * b / eps).exp();
            let r2 = a * a + b * b;
            [
                (-2.0 * eps * b + a * r2) * e - a * e + (-a / eps).exp(),
                (2.0 * eps * a - b * r2) * e + b * e,
            ]
        }),
    }
}

/// Unsteady Navier–Stokes solution
/// `u = (sin(1−x) sin(y+t), −cos(1−x) cos(y+t))`, `p = −cos(1−x) sin(y+t)`.
pub struct UnsteadySolution {
    pub u: TimeField<Vec2>,
    pub grad_u: TimeField<Mat2>,
    pub p: TimeField<f64>,
    pub f: TimeField<Vec2>,
}

pub fn trigonometric_flow(eps2: f64) -> UnsteadySolution {
    let u = |x: Point, t: f64| {
        let (s, c) = ((1.0 - x[0]).sin(), (1.0 - x[0]).cos());
        [s * (x[1] + t).sin(), -c * (x[1] + t).cos()]
    };
    UnsteadySolution {
        u: Box::new(u),
        grad_u: Box::new(|x, t| {
            let (s, c) = ((1.0 - x[0]).sin(), (1.0 - x[0]).cos());
            let (sy, cy) = ((x[1] + t).sin(), (x[1] + t).cos());
            [[-c * sy, s * cy], [-s * cy, c * sy]]
        }),
        p: Box::new(|x, t| -(1.0 - x[0]).cos() * (x[1] + t).sin()),
        f: Box::new(move |x, t| {
            let (s, c) = ((1.0 - x[0]).sin(), (1.0 - x[0]).cos());
            let (sy, cy) = ((x[1] + t).sin(), (x[1] + t).cos());
            let uu = u(x, t);
            // ∂t u − ε²Δu + (u·∇)u + ∇p, with Δu = −2u
            [
                s * cy + 2.0 * eps2 * uu[0] - s * c - s * sy,
                c * sy + 2.0 * eps2 * uu[1] - sy * cy - c * cy,
            ]
        }),
    }
}

/// Horizontal lid velocity for the cavity.
pub fn lid(speed: f64) -> impl Fn(Point, &str, f64) -> Vec2 + Send + Sync {
    move |_, tag, _| {
        if tag == "top" {
            [speed, 0.0]
        } else {
            [0.0, 0.0]
        }
    }
}

/// Inflow/outflow profiles of the step channel: parabolic on `x = 0`,
/// `y ∈ (0, 2)` and on `x = 4`, `y ∈ (1, 2)`, with equal fluxes.
pub fn step_profile(x: Point, tag: &str) -> Vec2 {
    match tag {
        "inlet" => [x[1] * (2.0 - x[1]) / 2.0, 0.0],
        "outlet" => [4.0 * (x[1] - 1.0) * (2.0 - x[1]), 0.0],
        _ => [0.0, 0.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // second-order central differences
    const H: f64 = 1e-4;

    fn grad_fd(f: &dyn Fn(Point) -> Vec2, x: Point) -> Mat2 {
        let d = |c: usize, k: usize| {
            let (mut a, mut b) = (x, x);
            a[k] += H;
            b[k] -= H;
            (f(a)[c] - f(b)[c]) / (2.0 * H)
        };
        [[d(0, 0), d(0, 1)], [d(1, 0), d(1, 1)]]
    }

    fn laplacian_fd(f: &dyn Fn(Point) -> Vec2, x: Point) -> Vec2 {
        let h = 1e-3;
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            for k in 0..2 {
                let (mut a, mut b) = (x, x);
                a[k] += h;
                b[k] -= h;
                *o += (f(a)[c] - 2.0 * f(x)[c] + f(b)[c]) / (h * h);
            }
        }
        out
    }

    fn pressure_grad_fd(p: &dyn Fn(Point) -> f64, x: Point) -> Vec2 {
        [
            (p([x[0] + H, x[1]]) - p([x[0] - H, x[1]])) / (2.0 * H),
            (p([x[0], x[1] + H]) - p([x[0], x[1] - H])) / (2.0 * H),
        ]
    }

    fn check_steady(s: &SteadySolution, eps2: f64, sigma: f64, tol: f64) {
        for x in [[0.3, 0.7], [0.55, 0.2], [0.81, 0.43]] {
            let g = (s.grad_u)(x);
            let fd = grad_fd(&*s.u, x);
            for (r, q) in g.iter().zip(&fd) {
                for (a, b) in r.iter().zip(q) {
                    assert!(
                        (a - b).abs() < tol * (1.0 + a.abs()),
                        "gradient {g:?} vs {fd:?}"
                    );
                }
            }
            assert!((g[0][0] + g[1][1]).abs() < 1e-12, "not solenoidal");
            let lap = laplacian_fd(&*s.u, x);
            let gp = pressure_grad_fd(&*s.p, x);
            let u = (s.u)(x);
            let f = (s.f)(x);
            for c in 0..2 {
                let lhs = -eps2 * lap[c] + sigma * u[c] + gp[c];
                assert!(
                    (lhs - f[c]).abs() < tol * (1.0 + f[c].abs()),
                    "momentum {c}: {lhs} vs {}",
                    f[c]
                );
            }
        }
    }

    #[test]
    fn loads_match_their_solutions() {
        check_steady(&no_flow(10.0), 1.0, 0.0, 1e-5);
        check_steady(&smooth_vortex(1.0, 0.0), 1.0, 0.0, 1e-4);
        check_steady(
            &smooth_vortex(2f64.powi(-16), 1.0),
            2f64.powi(-16),
            1.0,
            1e-4,
        );
        check_steady(&boundary_layer(0.25), 0.0625, 1.0, 1e-4);
    }

    #[test]
    fn unsteady_load() {
        let eps2 = 0.3;
        let s = trigonometric_flow(eps2);
        for (x, t) in [([0.2, 0.9], 0.0), ([0.6, 0.35], 0.7)] {
            let ut = |x: Point| (s.u)(x, t);
            let g = (s.grad_u)(x, t);
            let fd = grad_fd(&ut, x);
            for (r, q) in g.iter().zip(&fd) {
                for (a, b) in r.iter().zip(q) {
                    assert!((a - b).abs() < 1e-7);
                }
            }
            let u = ut(x);
            let dudt = {
                let (a, b) = ((s.u)(x, t + H), (s.u)(x, t - H));
                [(a[0] - b[0]) / (2.0 * H), (a[1] - b[1]) / (2.0 * H)]
            };
            let lap = laplacian_fd(&ut, x);
            let gp = pressure_grad_fd(&|y| (s.p)(y, t), x);
            let f = (s.f)(x, t);
            for c in 0..2 {
                let conv = u[0] * g[c][0] + u[1] * g[c][1];
                let lhs = dudt[c] - eps2 * lap[c] + conv + gp[c];
                assert!((lhs - f[c]).abs() < 1e-5, "{lhs} vs {}", f[c]);
            }
        }
    }

    #[test]
    fn step_fluxes_balance() {
        let n = 2000;
        let inflow: f64 = (0..n)
            .map(|i| step_profile([0.0, 2.0 * (i as f64 + 0.5) / n as f64], "inlet")[0])
            .sum::<f64>()
            * 2.0
            / n as f64;
        let outflow: f64 = (0..n)
            .map(|i| step_profile([4.0, 1.0 + (i as f64 + 0.5) / n as f64], "outlet")[0])
            .sum::<f64>()
            / n as f64;
        assert!((inflow - outflow).abs() < 1e-6, "{inflow} vs {outflow}");
    }
}
