//! The numerical examples and verification suites as batch experiments.
//!
//! [`run`] executes one [`ExperimentConfig`] and returns the report together
//! with optional VTK artifacts; [`RunOutput::write`] puts `report.json`,
//! `errors.csv`, `summary.txt` and the artifacts into the output directory.

pub mod cavity;
pub mod config;
mod examples;
mod output;
pub mod problems;
mod verify;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ConvergenceTable, KernelReport, StabilityReport};
use crate::assembly::MixedForms;
use crate::mesh::io::read_mesh;
use crate::mesh::{forward_step_mesh, structured_square_mesh, Triangulation};
use crate::space::{
    BoundarySelection, PressureDiscretization, PressureSpace, TaylorHoodSpace,
    VelocityDiscretization, VelocitySpace,
};

pub use cavity::{cavity_diagnostics, CavityDiagnostics, CavityFields, VortexCenter};
pub use config::{
    ConfigError, ElementChoice, ExperimentConfig, ExperimentId, FlatConfig, MeshSource,
};
pub use output::{errors_csv, summary, vtk_string, write_vtk, RunOutput};
pub use verify::{AtomSummary, ElementVerification};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// Wraps a module error with the name of the failing stage.
pub(crate) fn at<E>(stage: impl Into<String>) -> impl FnOnce(E) -> ExperimentError
where
    E: std::error::Error + Send + Sync + 'static,
{
    let stage = stage.into();
    move |e| ExperimentError::Stage {
        stage,
        source: Box::new(e),
    }
}

/// One pass/fail criterion evaluated by the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshInfo {
    pub level: usize,
    pub vertices: usize,
    pub cells: usize,
    pub edges: usize,
    pub h: f64,
    /// Cells without an interior vertex.
    pub assumption_a_violations: usize,
}

/// A convergence table for one parameter value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub parameter: f64,
    pub table: ConvergenceTable,
}

/// Time-stepping statistics of one Navier–Stokes run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransientSummary {
    pub level: usize,
    pub steps: usize,
    pub final_time: f64,
    pub steady: bool,
    pub nonlinear_iterations: usize,
    /// Largest per-step `max_T ‖div u_h‖_{0,T}`.
    pub max_divergence: f64,
    pub final_rate_of_change: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub element: String,
    /// Every setting used by the run, defaults included.
    pub config: BTreeMap<String, String>,
    pub meshes: Vec<MeshInfo>,
    pub series: Vec<Series>,
    pub transient: Vec<TransientSummary>,
    pub stability: Vec<StabilityReport>,
    pub kernels: Vec<KernelReport>,
    pub atoms: Vec<AtomSummary>,
    pub element_verification: Option<ElementVerification>,
    pub cavity: Option<CavityDiagnostics>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub timings: Vec<Timing>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub(crate) fn record(&mut self, stage: &str, since: Instant) {
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: since.elapsed().as_secs_f64(),
        });
    }

    pub(crate) fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Runs one experiment. Nothing is written to disk.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let mut report = ExperimentReport {
        experiment: config.experiment.to_string(),
        element: config.element.to_string(),
        config: config.echo(),
        ..Default::default()
    };
    let start = Instant::now();
    let mut artifacts = Vec::new();
    use ExperimentId::*;
    match config.experiment {
        Ex1Noflow => examples::no_flow(config, &mut report, &mut artifacts)?,
        Ex2Coriolis => examples::coriolis(config, &mut report, &mut artifacts)?,
        Ex3BrinkmanSmooth => examples::brinkman_smooth(config, &mut report, &mut artifacts)?,
        Ex4BrinkmanLayer => examples::brinkman_layer(config, &mut report, &mut artifacts)?,
        Ex5NsManufactured => examples::navier_stokes(config, &mut report, &mut artifacts)?,
        Ex6Cavity => examples::cavity(config, &mut report, &mut artifacts)?,
        VerifyElement => verify::element(config, &mut report)?,
        VerifyKernels => verify::kernels(config, &mut report)?,
        VerifyStability => verify::stability(config, &mut report)?,
    }
    report.timings.push(Timing {
        stage: "total".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(RunOutput { report, artifacts })
}

/// Level-0 mesh of a configuration.
pub fn base_mesh(config: &ExperimentConfig) -> Result<Triangulation, ExperimentError> {
    Ok(match &config.mesh {
        MeshSource::Square { n, diagonal } => structured_square_mesh(*n, *diagonal),
        MeshSource::Step { n } => forward_step_mesh(*n),
        MeshSource::File(path) => {
            read_mesh(path).map_err(at(format!("reading mesh {}", path.display())))?
        }
    })
}

/// The base mesh and its `levels − 1` uniform refinements.
pub fn mesh_hierarchy(
    config: &ExperimentConfig,
) -> Result<Vec<Arc<Triangulation>>, ExperimentError> {
    let mut meshes = vec![Arc::new(base_mesh(config)?)];
    while meshes.len() < config.levels {
        let next = meshes.last().expect("nonempty").refine_uniform();
        meshes.push(Arc::new(next));
    }
    Ok(meshes)
}

pub(crate) fn mesh_info(level: usize, mesh: &Triangulation) -> MeshInfo {
    MeshInfo {
        level,
        vertices: mesh.num_vertices(),
        cells: mesh.num_cells(),
        edges: mesh.num_edges(),
        h: mesh.mesh_size(),
        assumption_a_violations: mesh.assumption_a_violations().len(),
    }
}

/// Spaces and parameter-free forms of one element on one mesh.
pub struct Discretization {
    pub velocity: Box<dyn VelocityDiscretization>,
    pub pressure: Box<dyn PressureDiscretization>,
    pub forms: MixedForms,
}

impl Discretization {
    /// Pressures are taken mean-free when the whole boundary is Dirichlet.
    pub fn new(
        element: ElementChoice,
        mesh: &Arc<Triangulation>,
        dirichlet: &BoundarySelection,
    ) -> Result<Self, ExperimentError> {
        let mean_zero = dirichlet.covers(mesh);
        let (velocity, pressure): (
            Box<dyn VelocityDiscretization>,
            Box<dyn PressureDiscretization>,
        ) = match element {
            ElementChoice::Npp => (
                Box::new(
                    VelocitySpace::new(mesh.clone(), dirichlet).map_err(at("velocity space"))?,
                ),
                Box::new(PressureSpace::new(mesh.clone(), mean_zero)),
            ),
            ElementChoice::TaylorHood => {
                let th = TaylorHoodSpace::new(mesh.clone(), dirichlet, mean_zero)
                    .map_err(at("velocity space"))?;
                (Box::new(th.velocity), Box::new(th.pressure))
            }
        };
        let forms = MixedForms::assemble(&*velocity, &*pressure);
        Ok(Self {
            velocity,
            pressure,
            forms,
        })
    }
}

/// `lo ≤ x ≤ hi`, with a readable detail string.
pub(crate) fn band(name: &str, x: Option<f64>, lo: f64, hi: f64) -> Check {
    match x {
        Some(x) => Check::new(
            name,
            (lo..=hi).contains(&x),
            format!("{x:.3} in [{lo}, {hi}]"),
        ),
        None => Check::new(name, false, "rate unavailable"),
    }
}

pub(crate) fn at_least(name: &str, x: Option<f64>, lo: f64) -> Check {
    match x {
        Some(x) => Check::new(name, x >= lo, format!("{x:.3} >= {lo}")),
        None => Check::new(name, false, "rate unavailable"),
    }
}

/// Short label for a parameter value, e.g. `2^-8` for powers of two.
pub(crate) fn label(name: &str, x: f64) -> String {
    if x > 0.0 {
        let e = x.log2();
        if (e - e.round()).abs() < 1e-12 && e.round() != 0.0 {
            return format!("{name}=2^{}", e.round() as i64);
        }
    }
    format!("{name}={x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(label("eps", 2f64.powi(-8)), "eps=2^-8");
        assert_eq!(label("eps", 0.0), "eps=0");
        assert_eq!(label("Ra", 100.0), "Ra=100");
    }

    #[test]
    fn hierarchy_refines() {
        let mut c = ExperimentConfig::defaults(ExperimentId::Ex3BrinkmanSmooth);
        c.levels = 3;
        let m = mesh_hierarchy(&c).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[2].num_cells(), 16 * m[0].num_cells());
    }
}
