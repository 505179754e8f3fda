//! Run configuration in TOML: flat `key = value` pairs grouped under dotted
//! section headers.
//!
//! ```toml
//! output_dir = "out"
//!
//! [model]
//! payoff = "put"          # "call" or "put"
//! r = 0.06
//! strike = 1.0
//! delta = { family = "bounded_rational", params = [0.02, 0.0, 0.01] }
//! sigma = { family = "constant", params = [0.2] }
//!
//! [grid]                  # every key optional
//! s_min = 0.05            # default 0.05·strike
//! s_max = 20.0            # default 20·strike
//! y_max = 20.0            # default s_max
//! n_s = 257
//! n_y = 257
//! steps = 4096            # RK4 steps across [s_min, s_max]
//! general = false         # y-free fields through the 3D route
//!
//! [sim]                   # every key optional
//! n_paths = 20000
//! dt = 0.005
//! horizon = 120.0
//! seed = 1
//! truncation_budget = 1e-3
//!
//! [point]                 # start of `value`, `verify` and `simulate`
//! x = 1.0
//! s = 1.0
//! y = 0.0
//! ```
//!
//! Unknown keys are rejected by name.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coefficients::{CoefficientField, DomainBox, FieldFamily, ModelSpec, Payoff};
use crate::montecarlo::SimConfig;
use crate::solver2d::{Grid2d, DEFAULT_STEPS};
use crate::solver3d::Options3d;
use crate::{Error, Result};

/// Smallest accepted node count per axis.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub family: String,
    pub params: Vec<f64>,
}

impl FieldConfig {
    fn build(&self, name: &str) -> Result<CoefficientField> {
        let family = FieldFamily::parse(&self.family).ok_or_else(|| {
            Error::Config(format!(
                "model.{name}.family: unknown family `{}`",
                self.family
            ))
        })?;
        CoefficientField::new(family, self.params.clone())
            .map_err(|e| Error::Config(format!("model.{name}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub payoff: String,
    pub r: f64,
    pub strike: f64,
    pub delta: FieldConfig,
    pub sigma: FieldConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub y_max: Option<f64>,
    pub n_s: Option<usize>,
    pub n_y: Option<usize>,
    pub steps: Option<usize>,
    #[serde(default)]
    pub general: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub truncation_budget: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: f64,
    pub s: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelConfig,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    sim: SimSection,
    point: Option<PointConfig>,
    output_dir: Option<PathBuf>,
}

/// Grid bounds and node counts after defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grids {
    pub s_min: f64,
    pub s_max: f64,
    pub y_max: f64,
    pub n_s: usize,
    pub n_y: usize,
    pub steps: usize,
    pub general: bool,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub grids: Grids,
    pub sim: SimConfig,
    pub point: Option<PointConfig>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let m = &raw.model;
        let payoff = Payoff::parse(&m.payoff).ok_or_else(|| {
            Error::Config(format!(
                "model.payoff: expected `call` or `put`, got `{}`",
                m.payoff
            ))
        })?;
        let k = m.strike;
        let g = &raw.grid;
        let s_max = g.s_max.unwrap_or(20.0 * k);
        let grids = Grids {
            s_min: g.s_min.unwrap_or(0.05 * k),
            s_max,
            y_max: g.y_max.unwrap_or(s_max),
            n_s: g.n_s.unwrap_or(257),
            n_y: g.n_y.unwrap_or(257),
            steps: g.steps.unwrap_or(DEFAULT_STEPS),
            general: g.general,
        };
        if !(grids.s_min > 0.0 && grids.s_min < grids.s_max) {
            return Err(Error::Config(format!(
                "grid.s_min = {} must lie in (0, s_max = {})",
                grids.s_min, grids.s_max
            )));
        }
        for (key, n) in [
            ("grid.n_s", grids.n_s),
            ("grid.n_y", grids.n_y),
            ("grid.steps", grids.steps),
        ] {
            if n < MIN_NODES {
                return Err(Error::Config(format!("{key} = {n} is below {MIN_NODES}")));
            }
        }
        let spec = ModelSpec::new(
            m.r,
            k,
            payoff,
            m.delta.build("delta")?,
            m.sigma.build("sigma")?,
            DomainBox {
                s_max,
                y_max: grids.y_max,
            },
        )
        .map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        let sc = &raw.sim;
        let mut sim = SimConfig::new(
            sc.n_paths.unwrap_or(20_000),
            sc.dt.unwrap_or(5e-3),
            sc.horizon.unwrap_or(120.0),
            sc.seed.unwrap_or(1),
        );
        if let Some(b) = sc.truncation_budget {
            sim.truncation_budget = b;
        }
        Ok(Self {
            spec,
            grids,
            sim,
            point: raw.point,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn grid2d(&self) -> Grid2d {
        Grid2d {
            s_min: self.grids.s_min,
            s_max: self.grids.s_max,
            steps: self.grids.steps,
        }
    }

    /// The 3D solver shares one node grid between `s` and `y`, so `n_s` and
    /// `n_y` have to agree.
    pub fn options3d(&self) -> Result<Options3d> {
        if self.grids.n_s != self.grids.n_y {
            return Err(Error::Config(format!(
                "grid.n_s = {} and grid.n_y = {} must agree for the 3D solver",
                self.grids.n_s, self.grids.n_y
            )));
        }
        Ok(Options3d {
            s_min: self.grids.s_min,
            s_max: self.grids.s_max,
            nodes: self.grids.n_s,
            steps: self.grids.steps,
            general: self.grids.general,
        })
    }
}
