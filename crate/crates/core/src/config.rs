//! TOML experiment configuration. Solver knobs are optional overrides on top
//! of the per-dimension reference defaults; command-line flags are merged the
//! same way and win over file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::SimConfig;
use crate::error::{Error, Result};
use crate::mesh::{Grid1D, Grid2D};
use crate::model::ProblemSpec;
use crate::solver::{InitMode, SolverConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointwise_lambda: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_mode: Option<InitMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsolution_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supersolution_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compat_high_order: Option<bool>,
}

impl SolverSettings {
    /// Fields set in `other` replace ours.
    pub fn merged(&self, other: &SolverSettings) -> SolverSettings {
        macro_rules! pick {
            ($($f:ident),*) => { SolverSettings { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            max_iter,
            tol,
            damping,
            lambda_factor,
            pointwise_lambda,
            grad_clip,
            init_mode,
            subsolution_fraction,
            supersolution_fraction,
            compat_high_order
        )
    }

    /// Applies the overrides to the reference defaults for `dim`.
    pub fn resolve(&self, dim: u8) -> SolverConfig {
        let base = if dim == 2 {
            SolverConfig::default_2d()
        } else {
            SolverConfig::default_1d()
        };
        SolverConfig {
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            tol: self.tol.unwrap_or(base.tol),
            damping: self.damping.unwrap_or(base.damping),
            lambda_factor: self.lambda_factor.unwrap_or(base.lambda_factor),
            pointwise_lambda: self.pointwise_lambda.unwrap_or(base.pointwise_lambda),
            grad_clip: self.grad_clip.unwrap_or(base.grad_clip),
            init_mode: self.init_mode.unwrap_or(base.init_mode),
            subsolution_fraction: self.subsolution_fraction.unwrap_or(base.subsolution_fraction),
            supersolution_fraction: self.supersolution_fraction.unwrap_or(base.supersolution_fraction),
            compat_high_order: self.compat_high_order.unwrap_or(base.compat_high_order),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: u8,
    /// Points (per axis in 2D); 400 in 1D and 100 in 2D when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub half_width: f64,
    pub delta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            n: None,
            half_width: 1.0,
            delta: 0.05,
        }
    }
}

impl GridConfig {
    pub fn points(&self) -> usize {
        self.n.unwrap_or(if self.dim == 2 { 100 } else { 400 })
    }

    pub fn grid_1d(&self) -> Result<Grid1D> {
        Grid1D::new(self.points(), self.half_width, self.delta)
    }

    pub fn grid_2d(&self) -> Result<Grid2D> {
        if self.half_width != 1.0 {
            return Err(Error::Config("the 2D domain is the unit disk; half_width must be 1".into()));
        }
        Grid2D::new(self.points(), self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write solution fields next to the summary.
    pub write_fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            write_fields: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    pub grid: GridConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.resolve(self.grid.dim)
    }

    /// Everything that must hold before any output is written.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.grid.dim, 1 | 2) {
            return Err(Error::Config(format!("grid.dim must be 1 or 2, got {}", self.grid.dim)));
        }
        self.problem.validate()?;
        self.solver_config().validate()?;
        if self.grid.dim == 1 {
            self.grid.grid_1d()?;
        } else {
            self.grid.grid_2d()?;
        }
        if let Some(sim) = &self.sim {
            sim.validate(self.grid.dim as usize)?;
        }
        Ok(())
    }
}
