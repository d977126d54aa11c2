//! Examples 1–6: setup, solves and the pass/fail checks of each example.

use std::sync::Arc;

use log::info;

use super::cavity::cavity_diagnostics;
use super::config::{ElementChoice, ExperimentConfig};
use super::output::vtk_string;
use super::problems::{
    boundary_layer, lid, no_flow as gradient_load, smooth_vortex, step_profile, trigonometric_flow,
    SteadySolution,
};
use super::{
    at, at_least, band, label, mesh_hierarchy, mesh_info, Check, Discretization, ExperimentError,
    ExperimentReport,
};
use super::{Series, TransientSummary};
use crate::analysis::{average_rate, compute_errors, ConvergenceTable, ErrorReport, ExactSolution};
use crate::assembly::Scheme;
use crate::mesh::{Point, Triangulation};
use crate::solver::{
    solve_linear, solve_navier_stokes, LinearProblem, NavierStokesProblem, TransientConfig,
};
use crate::space::BoundarySelection;

pub(crate) type Artifacts = Vec<(String, String)>;

/// Relative divergence bound for strictly conservative solutions.
const CONSERVATION: f64 = 1e-9;

fn record_meshes(report: &mut ExperimentReport, meshes: &[Arc<Triangulation>]) {
    report.meshes = meshes
        .iter()
        .enumerate()
        .map(|(l, m)| mesh_info(l, m))
        .collect();
}

/// `‖u_h‖₀` and the rest of an error report against the zero field.
fn norms(d: &Discretization, u: &[f64]) -> ErrorReport {
    let zero = |_: Point| [0.0; 2];
    let zero_grad = |_: Point| [[0.0; 2]; 2];
    compute_errors(
        &*d.velocity,
        &*d.pressure,
        u,
        None,
        &ExactSolution {
            u: &zero,
            grad_u: &zero_grad,
            p: None,
        },
        1.0,
    )
}

fn conserving(r: &ErrorReport) -> bool {
    r.discrete_divergence <= CONSERVATION * r.discrete_h1_norm
}

/// Solves one steady problem with known solution on every level.
fn steady_series(
    config: &ExperimentConfig,
    meshes: &[Arc<Triangulation>],
    scheme: Scheme,
    eps2: f64,
    exact: &SteadySolution,
    dirichlet_lift: bool,
    artifacts: &mut Artifacts,
    name: &str,
) -> Result<ConvergenceTable, ExperimentError> {
    let mut table = ConvergenceTable::default();
    let zero = |_: Point| 0.0;
    let bc = |x: Point, _: &str| (exact.u)(x);
    for (l, mesh) in meshes.iter().enumerate() {
        let d = Discretization::new(config.element, mesh, &BoundarySelection::All)?;
        let problem = LinearProblem {
            scheme,
            eps2,
            f: &*exact.f,
            g: &zero,
            boundary: dirichlet_lift.then_some(&bc as &dyn Fn(Point, &str) -> [f64; 2]),
            omega: 0.0,
        };
        let sol = solve_linear(&*d.velocity, &*d.pressure, &d.forms, &problem)
            .map_err(at(format!("{name}, level {l}")))?;
        let ex = ExactSolution {
            u: &*exact.u,
            grad_u: &*exact.grad_u,
            p: Some(&*exact.p),
        };
        let r = compute_errors(
            &*d.velocity,
            &*d.pressure,
            &sol.velocity,
            Some(&sol.pressure),
            &ex,
            eps2,
        );
        info!(
            "{name} level {l}: h = {:.4}, L2 = {:.3e}, H1 = {:.3e}",
            r.h, r.velocity_l2, r.velocity_h1
        );
        table.levels.push(r);
        if config.vtk && l + 1 == meshes.len() {
            artifacts.push((
                format!("{}.vtk", name.replace(['=', '^'], "")),
                vtk_string(&d, &sol.velocity, &sol.pressure),
            ));
        }
    }
    Ok(table)
}

fn last(rates: &[Option<f64>]) -> Option<f64> {
    rates.last().copied().flatten()
}

/// Example 1: a pure gradient load of size Ra with no flow.
pub(crate) fn no_flow(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    let mut finest = Vec::new();
    for &ra in &config.ra {
        let name = label("Ra", ra);
        let exact = gradient_load(ra);
        let table = report.timed(&name, || {
            steady_series(
                config,
                &meshes,
                Scheme::Stokes,
                1.0,
                &exact,
                false,
                artifacts,
                &name,
            )
        })?;
        finest.push(table.levels.last().map_or(f64::NAN, |r| r.velocity_l2));
        // u_h is pure roundoff here, so a relative divergence bound says nothing
        report.series.push(Series {
            label: name,
            parameter: ra,
            table,
        });
    }
    let max = finest.iter().copied().fold(0.0, f64::max);
    let min = finest.iter().copied().fold(f64::INFINITY, f64::min);
    match config.element {
        ElementChoice::Npp => {
            report.checks.push(Check::new(
                "velocity bound",
                max <= 1e-6,
                format!("max ‖u_h‖₀ = {max:.3e} ≤ 1e-6"),
            ));
            report.checks.push(Check::new(
                "Ra independence",
                max < 2.0 * min,
                format!(
                    "‖u_h‖₀ ranges over [{min:.3e}, {max:.3e}]; ratio {:.3e} < 2",
                    max / min
                ),
            ));
        }
        ElementChoice::TaylorHood => {
            // the velocity error should scale with Ra
            if let (Some(&first), Some(&last)) = (finest.first(), finest.last()) {
                let (ra0, ra1) = (config.ra[0], *config.ra.last().expect("nonempty"));
                let growth = (last / first) / (ra1 / ra0);
                report.checks.push(Check::new(
                    "error grows with Ra",
                    (0.5..=2.0).contains(&growth),
                    format!("(e(Ra_max)/e(Ra_min)) / (Ra_max/Ra_min) = {growth:.3}"),
                ));
            }
        }
    }
    Ok(())
}

/// Example 2: Stokes flow over a step with a Coriolis force. Compares the
/// solution for each ω with the solution for ω = 0.
pub(crate) fn coriolis(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    let zero_f = |_: Point| [0.0; 2];
    let zero_g = |_: Point| 0.0;
    let mut tables = vec![ConvergenceTable::default(); config.omega.len()];
    for (l, mesh) in meshes.iter().enumerate() {
        let d = Discretization::new(config.element, mesh, &BoundarySelection::All)?;
        let solve = |omega: f64| {
            let problem = LinearProblem {
                scheme: Scheme::Stokes,
                eps2: config.eps2,
                f: &zero_f,
                g: &zero_g,
                boundary: Some(&step_profile),
                omega,
            };
            solve_linear(&*d.velocity, &*d.pressure, &d.forms, &problem)
                .map_err(at(format!("{}, level {l}", label("omega", omega))))
        };
        let reference = solve(0.0)?;
        let scale = norms(&d, &reference.velocity);
        for (k, &omega) in config.omega.iter().enumerate() {
            let sol = report.timed(&format!("omega={omega}, level {l}"), || solve(omega))?;
            let diff: Vec<f64> = sol
                .velocity
                .iter()
                .zip(&reference.velocity)
                .map(|(a, b)| a - b)
                .collect();
            let mut r = norms(&d, &diff);
            // conservation is judged on the solution itself
            let own = norms(&d, &sol.velocity);
            r.discrete_divergence = own.discrete_divergence;
            r.discrete_h1_norm = own.discrete_h1_norm;
            info!(
                "omega = {omega}, level {l}: ‖u(ω) − u(0)‖₀ = {:.3e}",
                r.velocity_l2
            );
            // relative to ‖u(0)‖₀
            r.velocity_l2 /= scale.velocity_l2;
            r.velocity_h1 /= scale.velocity_h1;
            tables[k].levels.push(r);
            if config.vtk && l + 1 == meshes.len() {
                artifacts.push((
                    format!("omega{omega}.vtk"),
                    vtk_string(&d, &sol.velocity, &sol.pressure),
                ));
            }
        }
    }
    for (table, &omega) in tables.into_iter().zip(&config.omega) {
        let name = label("omega", omega);
        if config.element == ElementChoice::Npp {
            let worst = table
                .levels
                .iter()
                .map(|r| r.velocity_l2)
                .fold(0.0, f64::max);
            report.checks.push(Check::new(
                format!("rotation invariance {name}"),
                worst <= 1e-8,
                format!("max ‖u(ω) − u(0)‖₀ / ‖u(0)‖₀ = {worst:.3e} ≤ 1e-8"),
            ));
            let ok = table.levels.iter().all(conserving);
            report.checks.push(Check::new(
                format!("conservation {name}"),
                ok,
                "‖div u_h‖ ≤ 1e-9 ‖u_h‖_1,h on every level",
            ));
        }
        report.series.push(Series {
            label: format!("{name} relative change"),
            parameter: omega,
            table,
        });
    }
    Ok(())
}

/// Example 3: smooth Brinkman solution for each ε.
pub(crate) fn brinkman_smooth(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    for &eps in &config.eps {
        let eps2 = eps * eps;
        let name = label("eps", eps);
        let scheme = if eps2 == 0.0 {
            Scheme::Darcy
        } else {
            Scheme::Brinkman
        };
        let exact = smooth_vortex(eps2, 1.0);
        let table = report.timed(&name, || {
            steady_series(
                config, &meshes, scheme, eps2, &exact, false, artifacts, &name,
            )
        })?;
        if config.element == ElementChoice::Npp {
            let l2 = last(&table.rates(|r| Some(r.velocity_l2)));
            let h1 = last(&table.rates(|r| Some(r.velocity_h1)));
            if eps == 2f64.powi(-8) {
                report
                    .checks
                    .push(band(&format!("L2 rate {name}"), l2, 1.8, 2.2));
                report
                    .checks
                    .push(band(&format!("H1 rate {name}"), h1, 0.8, 1.3));
            } else if eps == 0.0 {
                report
                    .checks
                    .push(band(&format!("L2 rate {name}"), l2, 2.7, 3.3));
                report
                    .checks
                    .push(band(&format!("H1 rate {name}"), h1, 1.7, 2.3));
            }
            let ok = table.levels.iter().all(conserving);
            report.checks.push(Check::new(
                format!("conservation {name}"),
                ok,
                "‖div u_h‖ ≤ 1e-9 ‖u_h‖_1,h on every level",
            ));
        }
        report.series.push(Series {
            label: name,
            parameter: eps,
            table,
        });
    }
    Ok(())
}

/// Example 4: Brinkman boundary layers, with the exact velocity as
/// Dirichlet data.
pub(crate) fn brinkman_layer(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    for &eps in &config.eps {
        if eps <= 0.0 {
            report.warnings.push(format!(
                "skipping ε = {eps}: the layer solution needs ε > 0"
            ));
            continue;
        }
        let eps2 = eps * eps;
        let name = label("eps", eps);
        let exact = boundary_layer(eps);
        let table = report.timed(&name, || {
            steady_series(
                config,
                &meshes,
                Scheme::Brinkman,
                eps2,
                &exact,
                true,
                artifacts,
                &name,
            )
        })?;
        let points = |f: &dyn Fn(&ErrorReport) -> f64| -> Vec<(f64, f64)> {
            table.levels.iter().map(|r| (r.h, f(r))).collect()
        };
        let energy = average_rate(&points(&|r| r.energy));
        let pressure = average_rate(&points(&|r| r.pressure_l2.unwrap_or(f64::NAN)));
        if config.element == ElementChoice::Npp {
            let need = if eps == 2f64.powi(-4) { 1.0 } else { 0.45 };
            report
                .checks
                .push(at_least(&format!("energy rate {name}"), energy, need));
            report
                .checks
                .push(at_least(&format!("pressure rate {name}"), pressure, 0.9));
        }
        report.series.push(Series {
            label: name,
            parameter: eps,
            table,
        });
    }
    Ok(())
}

/// Example 5: manufactured unsteady Navier–Stokes solution; errors at the
/// final time.
pub(crate) fn navier_stokes(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    let exact = trigonometric_flow(config.eps2);
    let f = |x: Point, t: f64| (exact.f)(x, t);
    let bc = |x: Point, _: &str, t: f64| (exact.u)(x, t);
    let init = |x: Point| (exact.u)(x, 0.0);
    let problem = NavierStokesProblem {
        eps2: config.eps2,
        f: &f,
        boundary: &bc,
        initial: &init,
    };
    let tc = transient(config);
    let mut table = ConvergenceTable::default();
    for (l, mesh) in meshes.iter().enumerate() {
        let d = Discretization::new(config.element, mesh, &BoundarySelection::All)?;
        let traj = report.timed(&format!("level {l}"), || {
            solve_navier_stokes(
                &*d.velocity,
                &*d.pressure,
                &d.forms,
                &problem,
                &tc,
                |_, _, _| {},
            )
            .map_err(at(format!("level {l}")))
        })?;
        let t = traj.time;
        // the θ-scheme pressure lives at t − (1 − θ) dt
        let tp = t - (1.0 - tc.scheme.theta()) * tc.dt;
        let u = |x: Point| (exact.u)(x, t);
        let g = |x: Point| (exact.grad_u)(x, t);
        let p = |x: Point| (exact.p)(x, tp);
        let sol = &traj.final_solution;
        let r = compute_errors(
            &*d.velocity,
            &*d.pressure,
            &sol.velocity,
            Some(&sol.pressure),
            &ExactSolution {
                u: &u,
                grad_u: &g,
                p: Some(&p),
            },
            config.eps2,
        );
        info!("level {l}: L2 = {:.3e} at t = {t}", r.velocity_l2);
        let summary = transient_summary(l, &traj);
        if config.element == ElementChoice::Npp {
            let bound = CONSERVATION * r.discrete_h1_norm.max(1.0);
            report.checks.push(Check::new(
                format!("conservation level {l}"),
                summary.max_divergence <= bound,
                format!(
                    "max over steps and cells of ‖div u_h‖ = {:.3e} ≤ {bound:.1e}",
                    summary.max_divergence
                ),
            ));
        }
        report.transient.push(summary);
        table.levels.push(r);
        if config.vtk && l + 1 == meshes.len() {
            artifacts.push((
                "final.vtk".into(),
                vtk_string(&d, &sol.velocity, &sol.pressure),
            ));
        }
    }
    let rates = table.rates(|r| Some(r.velocity_l2));
    match config.element {
        ElementChoice::Npp => {
            for (k, r) in rates.iter().enumerate() {
                report
                    .checks
                    .push(band(&format!("L2 rate levels {k}-{}", k + 1), *r, 1.8, 3.2));
            }
            let monotone = table
                .levels
                .windows(2)
                .all(|w| w[1].velocity_l2 < w[0].velocity_l2);
            report.checks.push(Check::new(
                "monotone error decrease",
                monotone,
                "velocity L2 error decreases on every level",
            ));
        }
        ElementChoice::TaylorHood => {
            report
                .checks
                .push(band("L2 rate finest pair", last(&rates), 1.3, 1.8))
        }
    }
    report.series.push(Series {
        label: label("eps2", config.eps2),
        parameter: config.eps2,
        table,
    });
    Ok(())
}

fn transient(config: &ExperimentConfig) -> TransientConfig {
    let mut tc = TransientConfig::new(config.dt, config.final_time, config.scheme);
    tc.tolerance = config.tolerance;
    tc.max_iterations = config.max_iterations;
    tc.convection = config.convection;
    tc.steady_tolerance = config.steady_tolerance;
    tc
}

fn transient_summary(level: usize, traj: &crate::solver::Trajectory) -> TransientSummary {
    TransientSummary {
        level,
        steps: traj.steps.len(),
        final_time: traj.time,
        steady: traj.steady,
        nonlinear_iterations: traj.steps.iter().map(|s| s.iterations).sum(),
        max_divergence: traj.steps.iter().map(|s| s.divergence).fold(0.0, f64::max),
        final_rate_of_change: traj.steps.last().map_or(0.0, |s| s.rate_of_change),
    }
}

// Reference values of the 43×43 cavity at ε² = 10⁻³.
const PSI_PRIMARY: f64 = 1.1733e-1;
const PSI_CENTER: [f64; 2] = [0.4688, 0.5703];
const VORTICITY_PRIMARY: f64 = 2.0615;
const PSI_SECONDARY: f64 = -1.6221e-3;
const PSI_PRIMARY_TH: f64 = 1.0862e-1;

/// Example 6: lid-driven cavity marched to steady state.
pub(crate) fn cavity(
    config: &ExperimentConfig,
    report: &mut ExperimentReport,
    artifacts: &mut Artifacts,
) -> Result<(), ExperimentError> {
    let meshes = mesh_hierarchy(config)?;
    record_meshes(report, &meshes);
    let mesh = meshes.last().expect("at least one level");
    let d = Discretization::new(config.element, mesh, &BoundarySelection::All)?;
    let zero = |_: Point, _: f64| [0.0; 2];
    let rest = |_: Point| [0.0; 2];
    // the lid moves in −x, which makes the primary vortex counter-clockwise
    let lid = lid(-1.0);
    let problem = NavierStokesProblem {
        eps2: config.eps2,
        f: &zero,
        boundary: &lid,
        initial: &rest,
    };
    let tc = transient(config);
    let traj = report.timed("time stepping", || {
        solve_navier_stokes(
            &*d.velocity,
            &*d.pressure,
            &d.forms,
            &problem,
            &tc,
            |s, _, _| {
                if s.step % 50 == 0 {
                    info!(
                        "t = {:.1}: ‖∂u/∂t‖ ≈ {:.3e}, {} iterations",
                        s.time, s.rate_of_change, s.iterations
                    );
                }
            },
        )
        .map_err(at("time stepping"))
    })?;
    let summary = transient_summary(meshes.len() - 1, &traj);
    if !traj.steady {
        report.warnings.push(format!(
            "not steady at t = {}: ‖∂u/∂t‖ ≈ {:.3e} above the steady tolerance",
            traj.time, summary.final_rate_of_change
        ));
    }
    report.transient.push(summary);
    let u = &traj.final_solution.velocity;
    let (diag, _) = report.timed("diagnostics", || {
        cavity_diagnostics(&*d.velocity, u, config.lattice).map_err(at("diagnostics"))
    })?;
    let rel = |x: f64, r: f64| ((x - r) / r).abs();
    match config.element {
        ElementChoice::Npp => {
            let p = &diag.primary;
            let cell = 1.0 / (config.lattice - 1) as f64;
            report.checks.push(Check::new(
                "primary streamfunction",
                rel(p.psi, PSI_PRIMARY) <= 0.05,
                format!(
                    "ψ = {:.4e}, reference {PSI_PRIMARY:.4e}, tolerance 5%",
                    p.psi
                ),
            ));
            let off = (p.x - PSI_CENTER[0]).abs().max((p.y - PSI_CENTER[1]).abs());
            report.checks.push(Check::new(
                "primary vortex location",
                off <= cell + 1e-12,
                format!(
                    "({:.4}, {:.4}), reference ({}, {}), tolerance {cell:.4}",
                    p.x, p.y, PSI_CENTER[0], PSI_CENTER[1]
                ),
            ));
            report.checks.push(Check::new(
                "primary vorticity",
                rel(p.vorticity, VORTICITY_PRIMARY) <= 0.05,
                format!(
                    "ω = {:.4e}, reference {VORTICITY_PRIMARY:.4e}, tolerance 5%",
                    p.vorticity
                ),
            ));
            let s = diag.secondary.as_ref().map(|s| s.psi);
            report.checks.push(Check::new(
                "secondary streamfunction",
                s.is_some_and(|s| rel(s, PSI_SECONDARY) <= 0.15),
                match s {
                    Some(s) => format!("ψ = {s:.4e}, reference {PSI_SECONDARY:.4e}, tolerance 15%"),
                    None => "no secondary vortex found".into(),
                },
            ));
        }
        ElementChoice::TaylorHood => report.warnings.push(format!(
            "primary ψ = {:.4e}; published Taylor–Hood value {PSI_PRIMARY_TH:.4e}",
            diag.primary.psi
        )),
    }
    if config.vtk {
        artifacts.push((
            "cavity.vtk".into(),
            vtk_string(&d, u, &traj.final_solution.pressure),
        ));
    }
    report.cavity = Some(diag);
    Ok(())
}
