use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::solver::{Preconditioner, SolveConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Franke's function on nested grids of the unit square.
    Franke,
    /// Corner-singular harmonic function on nested L-shape grids.
    Lshape,
    /// `cloud_target` on random subsamples of a point cloud file.
    Cloud,
    /// Data file whose last column holds function values.
    Custom,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Which `h_l` sets the kernel scale `δ_l = γ h_l` on L-shape grids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMesh {
    /// `h_l = 2^-l`, as on the unit-square grids; the grid spacing is half of
    /// that. This matches the reference L-shape results.
    #[default]
    Level,
    /// `h_l` equal to the grid spacing `2^-(l+1)`.
    Spacing,
}

fn default_kernel() -> KernelFamily {
    KernelFamily::Matern32
}
fn default_gamma() -> f64 {
    0.5
}
fn default_levels() -> usize {
    4
}
fn default_q() -> usize {
    2
}
fn default_kappa() -> f64 {
    1e-6
}
fn default_cg_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    10_000
}
fn default_tail_tol() -> f64 {
    1e-16
}
fn default_base() -> usize {
    20
}
fn default_factor() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_eval_points() -> usize {
    20_000
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment, as read from a JSON file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    /// Coupling `γ` in `δ_l = γ h_l`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Polynomial degree of the samplets (`q + 1` vanishing moments).
    #[serde(default = "default_q")]
    pub q: usize,
    /// Admissibility parameter; defaults to the spatial dimension.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Skip the admissibility cutoff entirely.
    #[serde(default)]
    pub no_cutoff: bool,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub precond: Preconditioner,
    /// L-shape only; the other experiments always scale by their mesh size.
    #[serde(default)]
    pub kernel_mesh: KernelMesh,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub leaf_capacity: Option<usize>,
    #[serde(default)]
    pub precision: Precision,
    /// Point cloud (cloud) or data file (custom).
    #[serde(default)]
    pub points: Option<PathBuf>,
    /// Singularity location of the cloud target.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Cloud/custom: size of the coarsest level.
    #[serde(default = "default_base")]
    pub base: usize,
    /// Cloud/custom: cardinality growth per level.
    #[serde(default = "default_factor")]
    pub factor: usize,
    #[serde(default = "default_true")]
    pub nested: bool,
    /// Grids: evaluation spacing `2^-eval_level` (default 9).
    #[serde(default)]
    pub eval_level: Option<u32>,
    /// Cloud/custom: size of the fixed random evaluation subset (capped by the
    /// cloud size; custom data is always evaluated at every data point).
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub dump_patterns: bool,
    #[serde(default)]
    pub dump_coefficients: bool,
    #[serde(default)]
    pub dump_residuals: bool,
}

impl ExperimentConfig {
    pub const DEFAULT_EVAL_LEVEL: u32 = 9;

    /// Config with defaults for everything but the experiment kind.
    pub fn new(experiment: Experiment) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Spatial dimension implied by the experiment, when known up front.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self.experiment {
            Experiment::Franke | Experiment::Lshape => Some(2),
            Experiment::Cloud => self.x0.as_ref().map(Vec::len),
            Experiment::Custom => None,
        }
    }

    pub fn rho_for(&self, dim: usize) -> Option<f64> {
        if self.no_cutoff {
            None
        } else {
            Some(self.rho.unwrap_or(dim as f64))
        }
    }

    pub fn eval_level(&self) -> u32 {
        self.eval_level.unwrap_or(Self::DEFAULT_EVAL_LEVEL)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            cg_tol: self.cg_tol,
            max_iters: self.max_iters,
            preconditioner: self.precond,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.levels == 0 {
            return fail("levels must be at least 1".into());
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return fail(format!("rho must be positive, got {rho}"));
            }
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return fail(format!("kappa must be nonnegative, got {}", self.kappa));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return fail(format!("tail_tol must lie in (0,1), got {}", self.tail_tol));
        }
        self.solve_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.leaf_capacity == Some(0) {
            return fail("leaf_capacity must be positive".into());
        }
        match self.experiment {
            Experiment::Franke | Experiment::Lshape => {
                let max_level = match self.experiment {
                    Experiment::Franke => 12,
                    _ => 11,
                };
                if self.levels > max_level {
                    return fail(format!("at most {max_level} grid levels are supported"));
                }
                let e = self.eval_level();
                if !(2..=12).contains(&e) {
                    return fail(format!("eval_level must lie in 2..=12, got {e}"));
                }
            }
            Experiment::Cloud | Experiment::Custom => {
                if self.points.is_none() {
                    return fail(format!(
                        "{} experiment requires a points file",
                        serde_json::to_value(self.experiment)?
                            .as_str()
                            .unwrap_or("this")
                    ));
                }
                if self.base == 0 || self.factor == 0 {
                    return fail("base and factor must be positive".into());
                }
                if self.eval_points == 0 {
                    return fail("eval_points must be positive".into());
                }
            }
        }
        if self.experiment == Experiment::Cloud {
            match &self.x0 {
                None => return fail("cloud experiment requires x0".into()),
                Some(x0) if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) => {
                    return fail("x0 must be a nonempty list of finite numbers".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = ExperimentConfig::from_json(r#"{"experiment":"franke","kernel":"matern32","q":4}"#)
            .unwrap();
        assert_eq!(c.q, 4);
        assert_eq!(c.rho_for(2), Some(2.0));
        assert_eq!(c.precond, Preconditioner::None);
        assert_eq!(c.kernel_mesh, KernelMesh::Level);
        c.validate().unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(
            ExperimentConfig::new(Experiment::Lshape).experiment,
            Experiment::Lshape
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"experiment":"franke","gama":0.5}"#).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(ExperimentConfig::from_json(r#"{"experiment":"torus"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment":"franke","precond":"ilu"}"#).is_err());
    }

    #[test]
    fn cloud_needs_points_and_centre() {
        let mut c = ExperimentConfig::new(Experiment::Cloud);
        assert!(c.validate().is_err());
        c.points = Some("cloud.txt".into());
        assert!(c.validate().is_err());
        c.x0 = Some(vec![0.0, 0.0, 0.0]);
        c.validate().unwrap();
        assert_eq!(c.fixed_dim(), Some(3));
        c.gamma = -1.0;
        assert!(c.validate().is_err());
    }
}
