//! JSON scenario files. Field names carry their units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comm::CommParams;
use crate::error::{invalid, Error, Result};
use crate::geometry::{sample_region, Density, Region, SampleMode, SampleSet};
use crate::mm::MmConfig;
use crate::problem::{BsSpace, PlanningProblem};
use crate::search::GridSpec;
use crate::sensing::{PhysicalSensing, SensingParams};

/// Sensing constants: either `kappa_s` directly or the physical inputs it
/// is derived from (defaults apply when both are absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalSensing>,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self { beta: 2.0, kappa_s: None, physical: None }
    }
}

impl SensingConfig {
    pub fn resolve(&self) -> Result<SensingParams> {
        match (self.kappa_s, &self.physical) {
            (Some(_), Some(_)) => Err(invalid("give either kappa_s or physical sensing inputs, not both")),
            (Some(k), None) => SensingParams::new(self.beta, k),
            (None, phys) => SensingParams::from_physical(self.beta, &phys.unwrap_or_default()),
        }
    }
}

fn default_density() -> Density {
    Density::Uniform
}

fn default_n_bs() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sensing_region: Region,
    /// Target grid points per axis of the sensing region.
    pub sensing_samples: Vec<usize>,
    #[serde(default = "default_density")]
    pub target_density: Density,
    /// Defaults to the sensing region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_region: Option<Region>,
    /// Defaults to the sensing sample counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_samples: Option<Vec<usize>>,
    #[serde(default = "default_density")]
    pub user_density: Density,
    #[serde(default = "default_n_bs")]
    pub n_bs: usize,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub comm: CommParams,
    /// Defaults to a padded box around both regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_space: Option<BsSpace>,
    #[serde(default)]
    pub optimizer: MmConfig,
    /// Grid for the reference search; defaults to the BS space at 1/8 of
    /// its span per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// CRLB thresholds (m²) for coverage reporting.
    #[serde(default)]
    pub coverage_thresholds_m2: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
            invalid(format!("scenario line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn user_region(&self) -> &Region {
        self.user_region.as_ref().unwrap_or(&self.sensing_region)
    }

    pub fn user_samples(&self) -> &[usize] {
        self.user_samples.as_deref().unwrap_or(&self.sensing_samples)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensing_region.validate()?;
        self.user_region().validate()?;
        if self.n_bs == 0 {
            return Err(invalid("n_bs must be >= 1"));
        }
        self.sensing.resolve()?;
        self.comm.validate()?;
        self.optimizer.validate()?;
        if let Some(space) = &self.bs_space {
            space.validate()?;
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if self.coverage_thresholds_m2.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(invalid("coverage thresholds must be positive"));
        }
        Ok(())
    }

    fn samples(region: &Region, counts: &[usize], density: &Density) -> Result<SampleSet> {
        match density {
            Density::Uniform => sample_region(region, counts, SampleMode::UniformGrid),
            d => sample_region(region, counts, SampleMode::PdfWeighted(&|p| d.value(p))),
        }
    }

    pub fn targets(&self) -> Result<SampleSet> {
        Self::samples(&self.sensing_region, &self.sensing_samples, &self.target_density)
    }

    pub fn users(&self) -> Result<SampleSet> {
        Self::samples(self.user_region(), self.user_samples(), &self.user_density)
    }

    pub fn bs_space(&self) -> BsSpace {
        self.bs_space.unwrap_or_else(|| BsSpace::around(&[&self.sensing_region, self.user_region()]))
    }

    pub fn grid(&self) -> GridSpec {
        self.grid.unwrap_or_else(|| {
            let space = self.bs_space();
            let span = space.max - space.min;
            let res = span.map(|s| if s > 0.0 { s / 8.0 } else { 1.0 });
            GridSpec { lo: space.min, hi: space.max, resolution: res, refinement_levels: 3, max_sweeps: 50 }
        })
    }

    pub fn problem(&self) -> Result<PlanningProblem> {
        let p = PlanningProblem {
            sensing_region: self.sensing_region.clone(),
            targets: self.targets()?,
            users: self.users()?,
            sensing: self.sensing.resolve()?,
            comm: self.comm,
            bs_space: self.bs_space(),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Parse a deployment file: `{"positions_m": [[x, y, z], ...]}`.
pub fn load_deployment(path: &Path) -> Result<crate::geometry::Deployment> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| match e.classify() {
        serde_json::error::Category::Io => Error::Json(e),
        _ => invalid(format!("deployment line {} column {}: {e}", e.line(), e.column())),
    })
}
