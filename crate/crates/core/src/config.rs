//! Run configuration: a flat JSON document whose keys mirror the CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptivity::{LoopConfig, RefinementMode};
use crate::bem::QuadConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fixture name (`cube`, `quarter_pipe`) or path of a geometry file.
    pub geometry: String,
    pub p: usize,
    pub mode: RefinementMode,
    pub theta: f64,
    pub budget: usize,
    pub tolerance: f64,
    pub n_far: usize,
    pub n_reg: usize,
    pub n_sing: usize,
    pub rho_near: f64,
    pub rho_far: f64,
    pub n_rhs: usize,
    pub interpolation_degree: Option<usize>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// Fill the `seconds` column; off by default so that output is
    /// reproducible byte for byte.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let quad = QuadConfig::default();
        let lc = LoopConfig::default();
        RunConfig {
            geometry: "cube".into(),
            p: lc.degree,
            mode: lc.mode,
            theta: lc.theta,
            budget: lc.budget,
            tolerance: lc.tolerance,
            n_far: quad.n_far,
            n_reg: quad.n_reg,
            n_sing: quad.n_sing,
            rho_near: quad.rho_near,
            rho_far: quad.rho_far,
            n_rhs: quad.n_rhs,
            interpolation_degree: None,
            output: None,
            seed: 7,
            timing: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig {
            n_far: self.n_far,
            n_reg: self.n_reg,
            n_sing: self.n_sing,
            rho_near: self.rho_near,
            rho_far: self.rho_far,
            n_rhs: self.n_rhs,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            degree: self.p,
            mode: self.mode,
            theta: self.theta,
            budget: self.budget,
            tolerance: self.tolerance,
            quad: self.quad(),
            interpolation_degree: self.interpolation_degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 2 {
            return Err(Error::Config(format!("p = {} is not one of 0, 1, 2", self.p)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta = {} is outside (0, 1]", self.theta)));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance = {} is negative", self.tolerance)));
        }
        if let Some(q) = self.interpolation_degree {
            if q > 16 {
                return Err(Error::Config(format!("interpolation_degree = {q} exceeds 16")));
            }
        }
        self.quad().validate()
    }
}
