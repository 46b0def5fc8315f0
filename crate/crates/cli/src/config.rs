//! Experiment configuration: a sectioned key-value file with one block per
//! subcommand. Unknown keys are rejected so a typo fails before any work
//! runs, and every numeric parameter is range-checked against the documented
//! limits of the operation it feeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use phdyn::maps::{
    CatSkew3, CoupledCat4, DynamicalMap, TorusAutomorphism, TorusTranslation,
};
use phdyn::perturb::{Perturbation, PerturbationMode};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaves: Option<LeavesSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holonomy: Option<HolonomySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sections: Option<SectionsSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSpec>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&text)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<i64>>>,
}

impl MapSpec {
    /// Instantiates the named map, rejecting options it does not take.
    pub fn build(&self) -> Result<Box<dyn DynamicalMap>, ConfigError> {
        let allow = |kappa: bool, shift: bool, dim: bool, rows: bool| -> Result<(), ConfigError> {
            for (set, ok, field) in [
                (self.kappa.is_some(), kappa, "kappa"),
                (self.shift.is_some(), shift, "shift"),
                (self.dim.is_some(), dim, "dim"),
                (self.rows.is_some(), rows, "rows"),
            ] {
                if set && !ok {
                    return Err(invalid(format!(
                        "map '{}' does not take the '{field}' option",
                        self.name
                    )));
                }
            }
            Ok(())
        };
        let need = |field: &str| invalid(format!("map '{}' needs the '{field}' option", self.name));

        match self.name.as_str() {
            "cat2" => {
                allow(false, false, false, false)?;
                Ok(Box::new(TorusAutomorphism::cat2()))
            }
            "identity" => {
                allow(false, false, true, false)?;
                let d = self.dim.ok_or_else(|| need("dim"))?;
                if !(1..=6).contains(&d) {
                    return Err(invalid("identity map dimension must lie in 1..=6"));
                }
                Ok(Box::new(TorusAutomorphism::identity(d)))
            }
            "linear_skew3" => {
                allow(false, false, false, false)?;
                Ok(Box::new(CatSkew3::linear()))
            }
            "cat_skew3" => {
                allow(true, false, false, false)?;
                let kappa = self.kappa.ok_or_else(|| need("kappa"))?;
                if !kappa.is_finite() || kappa.abs() > 1.0 {
                    return Err(invalid("cat_skew3 coupling must satisfy |kappa| <= 1"));
                }
                Ok(Box::new(CatSkew3::new(kappa)))
            }
            "coupled_cat4" => {
                allow(true, false, false, false)?;
                let kappa = self.kappa.ok_or_else(|| need("kappa"))?;
                if !kappa.is_finite() || kappa.abs() > 1.0 {
                    return Err(invalid("coupled_cat4 coupling must satisfy |kappa| <= 1"));
                }
                Ok(Box::new(CoupledCat4::new(kappa)))
            }
            "translation" => {
                allow(false, true, false, false)?;
                let shift = self.shift.as_ref().ok_or_else(|| need("shift"))?;
                if shift.is_empty() || shift.len() > 6 || shift.iter().any(|s| !s.is_finite()) {
                    return Err(invalid("translation shift must be 1 to 6 finite entries"));
                }
                Ok(Box::new(TorusTranslation::new(shift)))
            }
            "automorphism" => {
                allow(false, false, false, true)?;
                let rows = self.rows.as_ref().ok_or_else(|| need("rows"))?;
                TorusAutomorphism::from_rows(rows, "automorphism")
                    .map(|m| Box::new(m) as Box<dyn DynamicalMap>)
                    .map_err(|e| invalid(e.to_string()))
            }
            other => Err(invalid(format!("unknown map '{other}'"))),
        }
    }
}

fn check_point(name: &str, point: &[f64], d: usize) -> Result<(), ConfigError> {
    if point.len() != d {
        return Err(invalid(format!(
            "{name} must have {d} coordinates, got {}",
            point.len()
        )));
    }
    if point.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{name} has a non-finite coordinate")));
    }
    Ok(())
}

fn check_dims(dims: [usize; 3], d: usize) -> Result<(), ConfigError> {
    if dims.iter().sum::<usize>() != d {
        return Err(invalid(format!(
            "splitting dims {dims:?} do not sum to the map dimension {d}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    pub grid: usize,
    pub n_max: u32,
    pub dims: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apertures: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allow_trivial_center: Option<bool>,
}

impl CertifySpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_dims(self.dims, d)?;
        if !(1..=128).contains(&self.grid) {
            return Err(invalid("certify grid must lie in 1..=128"));
        }
        if !(1..=64).contains(&self.n_max) {
            return Err(invalid("certify n_max must lie in 1..=64"));
        }
        if let Some(ap) = self.apertures {
            if ap.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
                return Err(invalid("certify apertures must lie in (0, 0.5)"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeavesSpec {
    pub point: Vec<f64>,
    pub kind: String,
    pub rho: f64,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl LeavesSpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_point("leaves point", &self.point, d)?;
        if self.kind != "unstable" && self.kind != "stable" {
            return Err(invalid("leaf kind must be 'unstable' or 'stable'"));
        }
        if !(self.rho > 0.0 && self.rho <= 0.1) {
            return Err(invalid("leaf radius must lie in (0, 0.1]"));
        }
        if self.dim == 0 || self.dim >= d {
            return Err(invalid(format!("leaf dimension must lie in 1..{d}")));
        }
        if let Some(s) = self.samples {
            if !(2..=512).contains(&s) {
                return Err(invalid("leaf dump samples must lie in 2..=512"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub center: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    pub radius: f64,
    pub direction: Vec<f64>,
    pub alpha: f64,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl PerturbSpec {
    pub fn mode(&self) -> Result<PerturbationMode, ConfigError> {
        match self.mode.as_str() {
            "plain" => Ok(PerturbationMode::Plain),
            "volume" => Ok(PerturbationMode::Volume),
            "symplectic" => Ok(PerturbationMode::Symplectic),
            other => Err(invalid(format!(
                "perturbation mode '{other}' is not 'plain', 'volume', or 'symplectic'"
            ))),
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_point("perturb center", &self.center, d)?;
        if let Some(z) = &self.offset {
            check_point("perturb offset", z, d)?;
        }
        check_point("perturb direction", &self.direction, d)?;
        if self.direction.iter().map(|x| x * x).sum::<f64>() < 1e-24 {
            return Err(invalid("perturb direction must be nonzero"));
        }
        if !(self.radius > 0.0 && self.radius < 0.25) {
            return Err(invalid("perturb radius must lie in (0, 0.25)"));
        }
        let mode = self.mode()?;
        if mode == PerturbationMode::Symplectic && d % 2 != 0 {
            return Err(invalid("symplectic perturbation needs an even dimension"));
        }
        let cap = Perturbation::alpha_max(mode, d);
        if !(0.0..=cap).contains(&self.alpha) {
            return Err(invalid(format!(
                "alpha must lie in [0, {cap:.6}] for mode '{}' in dimension {d}",
                self.mode
            )));
        }
        if let Some(s) = self.samples {
            if !(1..=100_000).contains(&s) {
                return Err(invalid("perturb samples must lie in 1..=100000"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolonomySpec {
    pub anchor: Vec<f64>,
    pub eps: f64,
    pub dims: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halvings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

impl HolonomySpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_point("holonomy anchor", &self.anchor, d)?;
        check_dims(self.dims, d)?;
        if self.dims[1] == 0 {
            return Err(invalid("holonomy needs at least one center direction"));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-2) {
            return Err(invalid("holonomy eps must lie in (0, 0.01]"));
        }
        if self.halvings.is_some_and(|h| h > 6) {
            return Err(invalid("holonomy halvings capped at 6"));
        }
        if let Some(scales) = &self.scales {
            if scales.is_empty()
                || scales
                    .iter()
                    .any(|s| !s.is_finite() || *s == 0.0 || s.abs() > 1.0)
            {
                return Err(invalid("holonomy scales must be nonzero and within [-1, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessSpec {
    pub anchor: Vec<f64>,
    pub eps: f64,
    pub dims: [usize; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<bool>,
}

impl AccessSpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_point("access anchor", &self.anchor, d)?;
        check_dims(self.dims, d)?;
        if self.dims[1] == 0 {
            return Err(invalid("access needs at least one center direction"));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-2) {
            return Err(invalid("access eps must lie in (0, 0.01]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionsSpec {
    pub j: usize,
    pub beta: f64,
    pub rho: f64,
    pub region_center: Vec<f64>,
    pub region_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claim_samples: Option<usize>,
}

impl SectionsSpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        check_point("sections region center", &self.region_center, d)?;
        if self.j > 64 {
            return Err(invalid("sections return depth capped at 64"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("sections beta must lie in (0, 1)"));
        }
        if !(self.rho > 0.0 && self.rho <= 0.02) {
            return Err(invalid("sections rho must lie in (0, 0.02]"));
        }
        if !(self.region_radius > self.rho && self.region_radius <= 0.1) {
            return Err(invalid("sections region radius must exceed rho and stay within 0.1"));
        }
        if let Some(s) = self.claim_samples {
            if !(1..=10_000).contains(&s) {
                return Err(invalid("sections claim samples must lie in 1..=10000"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_band: Option<f64>,
}

impl LyapunovSpec {
    pub fn validate(&self, d: usize) -> Result<(), ConfigError> {
        if !(1..=10_000_000).contains(&self.n) {
            return Err(invalid("lyapunov n must lie in 1..=10000000"));
        }
        if self.point.is_none() && self.samples.is_none() {
            return Err(invalid("lyapunov needs a 'point' or a 'samples' count (or both)"));
        }
        if let Some(p) = &self.point {
            check_point("lyapunov point", p, d)?;
        }
        if let Some(s) = self.samples {
            if !(1..=64).contains(&s) {
                return Err(invalid("lyapunov samples must lie in 1..=64"));
            }
        }
        if self.zero_band.is_some_and(|b| !(b > 0.0)) {
            return Err(invalid("lyapunov zero band must be positive"));
        }
        Ok(())
    }
}
