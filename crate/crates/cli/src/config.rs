//! Declarative analysis configuration, read from TOML.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sppa_core::geometry::geojson::CoordinateUnits;
use sppa_core::geometry::{LambertConformalConic, ProjectionSpec};
use sppa_core::GridSpec;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Km,
    Lonlat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub units: Units,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateKind {
    /// Nadaraya-Watson smoothing of the marks of a points file.
    PointSmooth,
    /// Kernel intensity of a points file weighted by its marks.
    WeightedIntensity,
    /// Number of points of a file within `radius` of each cell center.
    NeighborCount,
    /// An ESRI ASCII grid, read at the analysis cell centers.
    Raster,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    pub path: PathBuf,
    pub kind: CovariateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub log_transform: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestConfig {
    pub quadrat: [usize; 2],
    pub nsim: usize,
    pub r_steps: usize,
    /// Largest K radius; a quarter of the window's shorter side when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            quadrat: [6, 6],
            nsim: 39,
            r_steps: 21,
            r_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub stepwise: bool,
    pub alpha: f64,
    /// Also write `s / sqrt(λ̂)` residuals next to the `s / λ̂` ones.
    pub conventional_pearson: bool,
    /// Tail fraction reported for the residual thresholds.
    pub residual_tail: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stepwise: true,
            alpha: 0.05,
            conventional_pearson: false,
            residual_tail: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window: WindowConfig,
    #[serde(default = "ProjectionSpec::lambert_ii_extended")]
    pub projection: ProjectionSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    /// Bandwidth (km) of the response intensity; Scott's rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub tests: TestConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl AnalysisConfig {
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: AnalysisConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn units(&self) -> Result<CoordinateUnits> {
        Ok(match self.window.units {
            Units::Km => CoordinateUnits::Kilometers,
            Units::Lonlat => CoordinateUnits::LonLat(LambertConformalConic::new(self.projection)?),
        })
    }

    /// Checks value ranges and that input paths are distinct. Readability is
    /// checked when each input is loaded.
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(CliError::Config(format!("{what} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        positive("sigma", self.sigma)?;
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return Err(CliError::Config("grid dimensions must be at least 1".into()));
        }
        if !(self.model.alpha > 0.0 && self.model.alpha <= 1.0) {
            return Err(CliError::Config(format!("model.alpha must lie in (0, 1], got {}", self.model.alpha)));
        }
        if !(self.model.residual_tail > 0.0 && self.model.residual_tail < 0.5) {
            return Err(CliError::Config("model.residual_tail must lie in (0, 0.5)".into()));
        }
        if self.tests.quadrat.contains(&0) || self.tests.nsim == 0 || self.tests.r_steps < 2 {
            return Err(CliError::Config("tests need quadrat counts >= 1, nsim >= 1, r_steps >= 2".into()));
        }
        positive("tests.r_max", self.tests.r_max)?;
        self.projection.validate()?;

        let mut names = HashSet::new();
        for c in &self.covariates {
            if !names.insert(c.name.as_str()) {
                return Err(CliError::Config(format!("covariate {} is defined twice", c.name)));
            }
            let ctx = format!("covariate {}", c.name);
            positive(&format!("{ctx} sigma"), c.sigma)?;
            positive(&format!("{ctx} radius"), c.radius)?;
            match c.kind {
                CovariateKind::PointSmooth | CovariateKind::WeightedIntensity if c.sigma.is_none() => {
                    return Err(CliError::Config(format!("{ctx} needs sigma")));
                }
                CovariateKind::NeighborCount if c.radius.is_none() => {
                    return Err(CliError::Config(format!("{ctx} needs radius")));
                }
                _ => {}
            }
        }

        let mut inputs: Vec<(String, PathBuf)> = vec![("window".into(), self.window.path.clone())];
        if let Some(p) = &self.points {
            inputs.push(("points".into(), p.clone()));
        }
        inputs.extend(self.covariates.iter().map(|c| (format!("covariate {}", c.name), c.path.clone())));
        let mut seen = HashSet::new();
        for (what, p) in &inputs {
            let full = self.resolve(p);
            if !seen.insert(full.clone()) {
                return Err(CliError::Config(format!("{what}: path {} is used twice", p.display())));
            }
        }
        Ok(())
    }
}
