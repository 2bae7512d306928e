//! TOML run configuration for the batch CLI: one file declares any number of
//! convergence studies plus optional comparisons against embedded reference
//! tables.
//!
//! Defaults are explicit: `mu = 1`, `mesh = "uniform"`, `amplitude = 0.3`,
//! `seed = 0`, `backend = "auto"`, `tol = 1e-10`, `max_iterations = 200000`,
//! `error_tol = 0.02`, `rate_tol = 0.05`.
//!
//! ```toml
//! output_dir = "out"
//!
//! [[study]]
//! case = "example1"
//! lambda = 10.0
//! base_cells = 8
//! levels = 5
//! compare = ["6.3", "6.4"]
//!
//! [[study]]
//! case = "example1"
//! lambda = 1e7
//! base_cells = 8
//! levels = 5
//! mesh = "perturbed"
//! seed = 42
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::elasticity::LameParameters;
use crate::error::{Error, Result};
use crate::mms::{ManufacturedCase, MeshMode, StudyConfig};
use crate::solve::Backend;
use crate::table;

/// One `[[study]]` section, as written in the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Output file stem; defaults to a name derived from the settings.
    pub name: Option<String>,
    /// `example1` or `example2` (2D), `example3` (3D).
    pub case: String,
    /// Optional cross-check against the dimensionality the case implies.
    pub dims: Option<usize>,
    pub lambda: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub base_cells: usize,
    pub levels: usize,
    #[serde(default = "default_mesh")]
    pub mesh: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Also measure errors against the second-order interpolants.
    #[serde(default)]
    pub interpolant: bool,
    /// Tags of embedded reference tables to compare the produced table with.
    #[serde(default)]
    pub compare: Vec<String>,
    #[serde(default = "default_error_tol")]
    pub error_tol: f64,
    #[serde(default = "default_rate_tol")]
    pub rate_tol: f64,
}

fn default_mu() -> f64 {
    1.0
}
fn default_mesh() -> String {
    "uniform".into()
}
fn default_amplitude() -> f64 {
    0.3
}
fn default_backend() -> String {
    "auto".into()
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    200_000
}
fn default_error_tol() -> f64 {
    0.02
}
fn default_rate_tol() -> f64 {
    0.05
}

/// A whole run configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(rename = "study")]
    pub studies: Vec<StudySpec>,
}

impl Config {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Config> {
        let config: Config =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        if config.studies.is_empty() {
            return Err(Error::InvalidArgument(
                "config declares no [[study]] sections".into(),
            ));
        }
        let mut names = Vec::new();
        for (i, spec) in config.studies.iter().enumerate() {
            let name = spec
                .validate()
                .map_err(|e| Error::InvalidArgument(format!("study {}: {e}", i + 1)))?;
            if names.contains(&name) {
                return Err(Error::InvalidArgument(format!(
                    "study {}: duplicate output name {name:?}",
                    i + 1
                )));
            }
            names.push(name);
        }
        Ok(config)
    }

    /// Reads and validates a file.
    pub fn load(path: &Path) -> Result<Config> {
        Config::from_toml(&std::fs::read_to_string(path)?)
    }
}

impl StudySpec {
    /// Checks every field and returns the output file stem.
    pub fn validate(&self) -> Result<String> {
        let params = LameParameters::new(self.lambda, self.mu)?;
        let case = ManufacturedCase::by_name(&self.case, params)?;
        if let Some(dims) = self.dims {
            if dims != case.dims() {
                return Err(Error::InvalidArgument(format!(
                    "case {} is {}-dimensional, config says {dims}",
                    self.case,
                    case.dims()
                )));
            }
        }
        if self.base_cells < 2 {
            return Err(Error::InvalidArgument(
                "base_cells must be at least 2".into(),
            ));
        }
        if self.levels < 1 {
            return Err(Error::InvalidArgument("levels must be at least 1".into()));
        }
        self.mesh_mode()?;
        self.backend()?;
        for tag in &self.compare {
            let reference = table::Table::reference(tag).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown reference table {tag:?} (available: {})",
                    table::REFERENCE_TAGS.join(", ")
                ))
            })?;
            if reference.dims != case.dims() {
                return Err(Error::InvalidArgument(format!(
                    "reference table {tag} is {}-dimensional, the study is {}-dimensional",
                    reference.dims,
                    case.dims()
                )));
            }
        }
        if !(self.error_tol > 0.0) || !(self.rate_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "error_tol and rate_tol must be positive".into(),
            ));
        }
        Ok(self.output_name())
    }

    pub fn mesh_mode(&self) -> Result<MeshMode> {
        match self.mesh.as_str() {
            "uniform" => Ok(MeshMode::Uniform),
            "perturbed" => {
                if !(self.amplitude > 0.0 && self.amplitude < 0.5) {
                    return Err(Error::InvalidArgument(format!(
                        "perturbation amplitude must lie in (0, 0.5), got {}",
                        self.amplitude
                    )));
                }
                Ok(MeshMode::Perturbed {
                    amplitude: self.amplitude,
                    seed: self.seed,
                })
            }
            other => Err(Error::InvalidArgument(format!(
                "mesh must be \"uniform\" or \"perturbed\", got {other:?}"
            ))),
        }
    }

    pub fn backend(&self) -> Result<Backend> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver tol must be positive, got {}",
                self.tol
            )));
        }
        match self.backend.as_str() {
            "auto" => Ok(Backend::Auto),
            "direct" => Ok(Backend::Direct),
            "iterative" => Ok(Backend::Iterative {
                tol: self.tol,
                max_iterations: self.max_iterations,
            }),
            other => Err(Error::InvalidArgument(format!(
                "backend must be \"auto\", \"direct\" or \"iterative\", got {other:?}"
            ))),
        }
    }

    /// The file stem study artifacts are written under.
    pub fn output_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        format!(
            "{}-lambda{:e}-{}-n{}",
            self.case,
            self.lambda,
            if self.mesh == "uniform" {
                "uniform".to_string()
            } else {
                format!("perturbed{}", self.seed)
            },
            self.base_cells
        )
    }

    /// The solver-facing study description.
    pub fn study_config(&self) -> Result<StudyConfig> {
        let params = LameParameters::new(self.lambda, self.mu)?;
        Ok(StudyConfig {
            case: ManufacturedCase::by_name(&self.case, params)?,
            base_cells: self.base_cells,
            levels: self.levels,
            mesh: self.mesh_mode()?,
            backend: self.backend()?,
            with_interpolant: self.interpolant,
        })
    }
}
