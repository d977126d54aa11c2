//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! experiment = ex3-brinkman-smooth
//! element = npp
//! [mesh]
//! diagonal = criss-cross   # becomes mesh.diagonal
//! eps = 2^-4, 2^-8, 0
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::ConvectionForm;
use crate::mesh::DiagonalRule;
use crate::solver::TimeScheme;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered raw entries, later ones overriding earlier ones.
#[derive(Clone, Debug, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("invalid key `{key}`"),
                });
            }
            let key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            out.entries.insert(key, unquote(v.trim()).to_string());
        }
        Ok(out)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("override `{assignment}` is not of the form key=value"),
            })?;
        self.entries
            .insert(k.trim().to_string(), unquote(v.trim()).to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn strip_comment(line: &str) -> &str {
    // a `#` inside quotes is kept
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

/// Parses `1e-3`, `0.25` or powers such as `2^-8`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        let (b, e): (f64, f64) = (b.trim().parse().ok()?, e.trim().parse().ok()?);
        return Some(b.powf(e));
    }
    s.parse().ok()
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    let s = s.trim();
    let s = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .unwrap_or(s);
    if s.trim().is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(parse_number).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Ex1Noflow,
    Ex2Coriolis,
    Ex3BrinkmanSmooth,
    Ex4BrinkmanLayer,
    Ex5NsManufactured,
    Ex6Cavity,
    VerifyElement,
    VerifyKernels,
    VerifyStability,
}

impl ExperimentId {
    pub const ALL: [Self; 9] = [
        Self::Ex1Noflow,
        Self::Ex2Coriolis,
        Self::Ex3BrinkmanSmooth,
        Self::Ex4BrinkmanLayer,
        Self::Ex5NsManufactured,
        Self::Ex6Cavity,
        Self::VerifyElement,
        Self::VerifyKernels,
        Self::VerifyStability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ex1Noflow => "ex1-noflow",
            Self::Ex2Coriolis => "ex2-coriolis",
            Self::Ex3BrinkmanSmooth => "ex3-brinkman-smooth",
            Self::Ex4BrinkmanLayer => "ex4-brinkman-layer",
            Self::Ex5NsManufactured => "ex5-ns-manufactured",
            Self::Ex6Cavity => "ex6-cavity",
            Self::VerifyElement => "verify-element",
            Self::VerifyKernels => "verify-kernels",
            Self::VerifyStability => "verify-stability",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("expected one of {}", Self::ALL.map(Self::name).join(", ")))
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementChoice {
    Npp,
    TaylorHood,
}

impl FromStr for ElementChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "npp" => Ok(Self::Npp),
            "taylor-hood" | "th" => Ok(Self::TaylorHood),
            _ => Err("expected `npp` or `taylor-hood`".into()),
        }
    }
}

impl fmt::Display for ElementChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Npp => "npp",
            Self::TaylorHood => "taylor-hood",
        })
    }
}

/// Where the level-0 mesh comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    /// `n x n` squares on the unit square.
    Square {
        n: usize,
        diagonal: DiagonalRule,
    },
    /// Forward-facing step with `n` squares per unit length.
    Step {
        n: usize,
    },
    File(PathBuf),
}

/// A fully resolved run configuration; every field has a per-experiment
/// default and is echoed in the report.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub element: ElementChoice,
    pub output: PathBuf,
    pub mesh: MeshSource,
    /// Number of meshes: the base mesh and `levels − 1` uniform refinements.
    pub levels: usize,
    pub ra: Vec<f64>,
    pub omega: Vec<f64>,
    /// Values of ε (not ε²) for the Brinkman examples.
    pub eps: Vec<f64>,
    /// ε² of the Stokes/Navier–Stokes examples.
    pub eps2: f64,
    pub dt: f64,
    pub final_time: f64,
    pub scheme: TimeScheme,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub steady_tolerance: Option<f64>,
    pub convection: ConvectionForm,
    /// Evaluation lattice points per direction (cavity diagnostics).
    pub lattice: usize,
    pub vtk: bool,
    pub seed: u64,
    /// Random samples per case in the verification suites.
    pub samples: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: ExperimentId) -> Self {
        use ExperimentId::*;
        let square = |n, diagonal| MeshSource::Square { n, diagonal };
        let mut c = Self {
            experiment,
            element: ElementChoice::Npp,
            output: PathBuf::from("results").join(experiment.name()),
            mesh: square(4, DiagonalRule::CrissCross),
            levels: 4,
            ra: vec![1.0, 1e2, 1e4],
            omega: vec![100.0, 1000.0],
            eps: vec![2f64.powi(-4), 2f64.powi(-8), 0.0],
            eps2: 1.0,
            dt: 1e-3,
            final_time: 1e-2,
            scheme: TimeScheme::CrankNicolsonNewton,
            tolerance: 1e-10,
            max_iterations: 50,
            steady_tolerance: None,
            convection: ConvectionForm::Convective,
            lattice: 257,
            vtk: false,
            seed: 20240601,
            samples: 5,
        };
        match experiment {
            Ex1Noflow => {
                c.mesh = square(4, DiagonalRule::CrissCross);
                c.levels = 3;
            }
            Ex2Coriolis => {
                c.mesh = MeshSource::Step { n: 2 };
                c.levels = 3;
                c.eps2 = 0.01;
            }
            Ex3BrinkmanSmooth => {}
            Ex4BrinkmanLayer => {
                c.levels = 5;
                c.eps = (0..5).map(|k| 2f64.powi(-4 - 2 * k)).collect();
            }
            Ex5NsManufactured => {
                c.eps2 = 1e-6;
            }
            Ex6Cavity => {
                c.mesh = square(43, DiagonalRule::Same);
                c.levels = 1;
                c.eps2 = 1e-3;
                c.dt = 0.1;
                c.final_time = 90.0;
                c.scheme = TimeScheme::BackwardEulerPicard;
                c.steady_tolerance = Some(1e-8);
            }
            VerifyElement => {
                c.mesh = square(2, DiagonalRule::CrissCross);
                c.levels = 5;
                c.samples = 1000;
            }
            VerifyKernels => {
                c.levels = 1;
                c.samples = 5;
            }
            VerifyStability => {
                c.mesh = square(2, DiagonalRule::CrissCross);
                c.levels = 3;
            }
        }
        c
    }

    /// Resolves a raw configuration: `experiment` selects the defaults, all
    /// other keys override them.
    pub fn from_flat(flat: &FlatConfig) -> Result<Self, ConfigError> {
        let id = flat
            .get("experiment")
            .ok_or_else(|| ConfigError::Missing("experiment".into()))?;
        let id: ExperimentId = id
            .parse()
            .map_err(|reason| invalid("experiment", id, reason))?;
        let mut c = Self::defaults(id);
        // mesh keys are applied together because they depend on each other
        let mut mesh_kind = match c.mesh {
            MeshSource::Square { .. } => "square",
            MeshSource::Step { .. } => "step",
            MeshSource::File(_) => "file",
        }
        .to_string();
        let (mut n, mut diagonal, mut file) = match &c.mesh {
            MeshSource::Square { n, diagonal } => (*n, *diagonal, None),
            MeshSource::Step { n } => (*n, DiagonalRule::CrissCross, None),
            MeshSource::File(p) => (1, DiagonalRule::CrissCross, Some(p.clone())),
        };
        for (key, value) in flat.iter() {
            match key {
                "experiment" => {}
                "element" => c.element = value.parse().map_err(|r| invalid(key, value, r))?,
                "output" => c.output = PathBuf::from(value),
                "mesh.source" => mesh_kind = value.to_string(),
                "mesh.n" => n = positive_int(key, value)?,
                "mesh.diagonal" => {
                    diagonal = value.parse().map_err(|r: String| invalid(key, value, r))?
                }
                "mesh.file" => {
                    file = Some(PathBuf::from(value));
                    if flat.get("mesh.source").is_none() {
                        mesh_kind = "file".into();
                    }
                }
                "levels" => c.levels = positive_int(key, value)?,
                "ra" => c.ra = list(key, value, |x| x > 0.0)?,
                "omega" => c.omega = list(key, value, |x| x.is_finite())?,
                "eps" => c.eps = list(key, value, |x| x >= 0.0)?,
                "eps2" => c.eps2 = number(key, value, |x| x >= 0.0)?,
                "dt" => c.dt = number(key, value, |x| x > 0.0)?,
                "final_time" => c.final_time = number(key, value, |x| x >= 0.0)?,
                "scheme" => c.scheme = value.parse().map_err(|r| invalid(key, value, r))?,
                "tolerance" => c.tolerance = number(key, value, |x| x > 0.0)?,
                "max_iterations" => c.max_iterations = positive_int(key, value)?,
                "steady_tolerance" => {
                    c.steady_tolerance = match value {
                        "none" | "off" => None,
                        _ => Some(number(key, value, |x| x > 0.0)?),
                    }
                }
                "convection" => {
                    c.convection = match value {
                        "convective" => ConvectionForm::Convective,
                        "skew-symmetric" => ConvectionForm::SkewSymmetric,
                        _ => {
                            return Err(invalid(
                                key,
                                value,
                                "expected `convective` or `skew-symmetric`",
                            ))
                        }
                    }
                }
                "lattice" => {
                    c.lattice = positive_int(key, value)?;
                    if c.lattice < 2 {
                        return Err(invalid(key, value, "need at least 2 points"));
                    }
                }
                "vtk" => c.vtk = boolean(key, value)?,
                "seed" => {
                    c.seed = value
                        .parse()
                        .map_err(|_| invalid(key, value, "expected an integer"))?
                }
                "samples" => c.samples = positive_int(key, value)?,
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            }
        }
        c.mesh = match mesh_kind.as_str() {
            "square" => MeshSource::Square { n, diagonal },
            "step" => MeshSource::Step { n },
            "file" => {
                MeshSource::File(file.ok_or_else(|| ConfigError::Missing("mesh.file".into()))?)
            }
            other => {
                return Err(invalid(
                    "mesh.source",
                    other,
                    "expected `square`, `step` or `file`",
                ))
            }
        };
        Ok(c)
    }

    /// Every setting as `key → value`, in the same syntax the parser accepts.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("experiment", self.experiment.to_string());
        put("element", self.element.to_string());
        put("output", self.output.display().to_string());
        match &self.mesh {
            MeshSource::Square { n, diagonal } => {
                put("mesh.source", "square".into());
                put("mesh.n", n.to_string());
                put("mesh.diagonal", diagonal.to_string());
            }
            MeshSource::Step { n } => {
                put("mesh.source", "step".into());
                put("mesh.n", n.to_string());
            }
            MeshSource::File(p) => {
                put("mesh.source", "file".into());
                put("mesh.file", p.display().to_string());
            }
        }
        put("levels", self.levels.to_string());
        put("ra", list(&self.ra));
        put("omega", list(&self.omega));
        put("eps", list(&self.eps));
        put("eps2", format!("{:e}", self.eps2));
        put("dt", format!("{:e}", self.dt));
        put("final_time", format!("{:e}", self.final_time));
        put(
            "scheme",
            serde_json::to_value(self.scheme)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
        );
        put("tolerance", format!("{:e}", self.tolerance));
        put("max_iterations", self.max_iterations.to_string());
        put(
            "steady_tolerance",
            self.steady_tolerance
                .map_or("none".into(), |t| format!("{t:e}")),
        );
        put(
            "convection",
            match self.convection {
                ConvectionForm::Convective => "convective",
                ConvectionForm::SkewSymmetric => "skew-symmetric",
            }
            .into(),
        );
        put("lattice", self.lattice.to_string());
        put("vtk", self.vtk.to_string());
        put("seed", self.seed.to_string());
        put("samples", self.samples.to_string());
        m
    }

    /// The echo as a configuration file that reproduces this run.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn positive_int(key: &str, value: &str) -> Result<usize, ConfigError> {
    match value.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(invalid(key, value, "expected a positive integer")),
    }
}

fn number(key: &str, value: &str, ok: impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
    match parse_number(value) {
        Some(x) if ok(x) => Ok(x),
        Some(_) => Err(invalid(key, value, "out of range")),
        None => Err(invalid(key, value, "expected a number")),
    }
}

fn list(key: &str, value: &str, ok: impl Fn(f64) -> bool) -> Result<Vec<f64>, ConfigError> {
    match parse_list(value) {
        Some(v) if v.is_empty() => Err(invalid(key, value, "empty list")),
        Some(v) if v.iter().all(|&x| ok(x)) => Ok(v),
        Some(_) => Err(invalid(key, value, "value out of range")),
        None => Err(invalid(
            key,
            value,
            "expected a comma-separated list of numbers",
        )),
    }
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_overrides() {
        let text =
            "experiment = ex3-brinkman-smooth # trailing\n\n[mesh]\ndiagonal = same\nn = 3\n";
        let mut flat = FlatConfig::parse(text).unwrap();
        flat.set("eps=2^-8, 0").unwrap();
        let c = ExperimentConfig::from_flat(&flat).unwrap();
        assert_eq!(
            c.mesh,
            MeshSource::Square {
                n: 3,
                diagonal: DiagonalRule::Same
            }
        );
        assert_eq!(c.eps, vec![2f64.powi(-8), 0.0]);
        assert_eq!(c.levels, 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            FlatConfig::parse("a = 1\nnonsense\n"),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        let flat = FlatConfig::parse("levels = 2").unwrap();
        assert!(matches!(
            ExperimentConfig::from_flat(&flat),
            Err(ConfigError::Missing(_))
        ));
        let flat = FlatConfig::parse("experiment = ex1-noflow\ncolour = red").unwrap();
        assert!(matches!(
            ExperimentConfig::from_flat(&flat),
            Err(ConfigError::UnknownKey(_))
        ));
        let flat = FlatConfig::parse("experiment = ex1-noflow\nlevels = 0").unwrap();
        assert!(matches!(
            ExperimentConfig::from_flat(&flat),
            Err(ConfigError::Invalid { .. })
        ));
        let flat = FlatConfig::parse("experiment = ex9").unwrap();
        assert!(ExperimentConfig::from_flat(&flat).is_err());
    }

    #[test]
    fn echo_round_trips() {
        for id in ExperimentId::ALL {
            let c = ExperimentConfig::defaults(id);
            let again =
                ExperimentConfig::from_flat(&FlatConfig::parse(&c.to_text()).unwrap()).unwrap();
            assert_eq!(c, again, "{id}");
        }
    }

    #[test]
    fn cavity_defaults() {
        let c = ExperimentConfig::defaults(ExperimentId::Ex6Cavity);
        assert_eq!((c.dt, c.final_time, c.eps2), (0.1, 90.0, 1e-3));
        assert_eq!(
            c.mesh,
            MeshSource::Square {
                n: 43,
                diagonal: DiagonalRule::Same
            }
        );
        assert_eq!(c.scheme, TimeScheme::BackwardEulerPicard);
    }
}
