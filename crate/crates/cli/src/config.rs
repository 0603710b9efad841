//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use quasisol_core::{Grid, HomogeneousQ, PotentialSpec, Region, SolverConfig, VerifyConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Radial { radius: f64, nodes: usize },
    Box { half_width: f64, resolution: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potentials {
    pub w: PotentialSpec,
    pub v: PotentialSpec,
}

/// Cutoff radius `a`: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffChoice {
    Fixed(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OmegaShape {
    #[default]
    Ball,
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub omega_radius: f64,
    #[serde(default)]
    pub omega_shape: OmegaShape,
    pub a: CutoffChoice,
}

impl PenaltyConfig {
    pub fn region(&self) -> Region {
        match self.omega_shape {
            OmegaShape::Ball => Region::Ball { radius: self.omega_radius },
            OmegaShape::Box => Region::Box { half_width: self.omega_radius },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: usize,
    pub grid: GridConfig,
    pub potentials: Potentials,
    pub nonlinearity: HomogeneousQ,
    pub penalization: PenaltyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub epsilon_list: Vec<f64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Parsed config together with its exact source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub path: PathBuf,
}

impl RunConfig {
    /// Parses and validates; errors carry the JSON key path and line.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow::anyhow!(
                "config error at `{path}` (line {}, column {}): {inner}",
                inner.line(),
                inner.column()
            )
        })?;
        config.apply_seed();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let source = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config = Self::from_json(&source).with_context(|| format!("parsing {}", path.display()))?;
        Ok(LoadedConfig {
            config,
            source,
            path: path.to_path_buf(),
        })
    }

    /// All randomness flows from the run seed.
    pub fn apply_seed(&mut self) {
        self.solver.seed = self.seed;
        self.verify.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_list.is_empty() {
            bail!("epsilon_list must not be empty");
        }
        for &eps in &self.epsilon_list {
            if !(eps > 0.0 && eps <= 1.0) {
                bail!("epsilon {eps} outside (0, 1]");
            }
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            bail!("epsilon_list must be strictly decreasing");
        }
        if !(self.penalization.omega_radius > 0.0) {
            bail!("penalization.omega_radius must be positive");
        }
        if let CutoffChoice::Fixed(a) = self.penalization.a {
            if !(a > 0.0 && a.is_finite()) {
                bail!("penalization.a must be positive or \"auto\"");
            }
        }
        match self.grid {
            GridConfig::Radial { .. } if self.dimension < 3 => bail!("radial grids need dimension >= 3"),
            GridConfig::Box { .. } if !(2..=3).contains(&self.dimension) => {
                bail!("box grids support dimension 2 or 3")
            }
            _ => {}
        }
        self.solver.validate()?;
        self.build_grid()?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(match self.grid {
            GridConfig::Radial { radius, nodes } => Grid::radial(self.dimension, radius, nodes)?,
            GridConfig::Box { half_width, resolution } => Grid::cube(self.dimension, half_width, resolution)?,
        })
    }

    /// Lower bounds `(W0, V0)` of the potentials.
    pub fn floors(&self) -> (f64, f64) {
        (self.potentials.w.floor, self.potentials.v.floor)
    }

    /// Box runs in `d = 2` sit outside the `N >= 3` theory.
    pub fn is_extrapolation(&self) -> bool {
        self.dimension < 3
    }
}
