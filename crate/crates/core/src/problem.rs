//! The sampled planning problem shared by the optimizers.

use serde::{Deserialize, Serialize};

use crate::comm::{area_rate_positions, CommParams};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Region, SampleSet, Vec3};
use crate::sensing::{area_crlb_positions, SensingParams};

/// Axis-aligned volume in which BSs may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsSpace {
    #[serde(rename = "min_m")]
    pub min: Vec3,
    #[serde(rename = "max_m")]
    pub max: Vec3,
}

impl BsSpace {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|i| !(self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i])) {
            return Err(invalid("BS space needs finite bounds with min <= max"));
        }
        Ok(())
    }

    /// Box around the given regions: horizontally padded by a quarter of the
    /// overall diameter, vertically from 1 m above the lowest region up to
    /// half a diameter above the highest.
    pub fn around(regions: &[&Region]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for r in regions {
            let (a, b) = r.bounds();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        let diam = (hi - lo).norm().max(1.0);
        let pad = 0.25 * diam;
        BsSpace {
            min: Vec3::new(lo.x - pad, lo.y - pad, lo.z + 1.0),
            max: Vec3::new(hi.x + pad, hi.y + pad, hi.z + 0.5 * diam),
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        p.sup(&self.min).inf(&self.max)
    }
}

/// Targets, users and link constants of one deployment problem.
#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub sensing_region: Region,
    pub targets: SampleSet,
    pub users: SampleSet,
    pub sensing: SensingParams,
    pub comm: CommParams,
    pub bs_space: BsSpace,
}

impl PlanningProblem {
    pub fn validate(&self) -> Result<()> {
        self.sensing_region.validate()?;
        self.sensing.validate()?;
        self.comm.validate()?;
        self.bs_space.validate()?;
        if self.targets.is_empty() || self.users.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(())
    }

    /// Sampled A-CRLB; a BS sitting on a target counts as `+∞`.
    pub fn objective(&self, positions: &[Vec3]) -> f64 {
        area_crlb_positions(&self.targets, positions, &self.sensing).unwrap_or(f64::INFINITY)
    }

    /// Surrogate area rate; a BS sitting on a user counts as `+∞`.
    pub fn area_rate(&self, positions: &[Vec3]) -> f64 {
        area_rate_positions(&self.users, positions, &self.comm).unwrap_or(f64::INFINITY)
    }

    pub fn rate_constrained(&self) -> bool {
        self.comm.r_th > 0.0
    }

    pub fn meets_rate(&self, positions: &[Vec3]) -> bool {
        !self.rate_constrained() || self.area_rate(positions) >= self.comm.r_th
    }
}
