//! ToF multistatic localization: Fisher information over all ordered
//! transmitter/receiver pairs, point and area CRLB, CRLB fields and
//! coverage probability.

use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Deployment, SampleSet, Vec3};

/// FIMs whose eigenvalue spread exceeds this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Sensing-channel constants.
///
/// `kappa_s` folds every constant of the ranging-noise model into one
/// number, so that a link of lengths `d_tx`, `d_rx` has ranging variance
/// `d_tx^β · d_rx^β / κ_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub beta: f64,
    pub kappa_s: f64,
}

/// Physical inputs from which `κ_s` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSensing {
    pub bandwidth_hz: f64,
    pub m_r: f64,
    /// Transmit antennas; the expected sensing beamforming gain is `M_t − 1`.
    pub m_t: f64,
    pub sigma_s2_watts: f64,
    #[serde(default = "default_speed_of_light")]
    pub speed_of_light_m_s: f64,
    /// `|ξ|²`, squared reflection coefficient.
    pub rcs_gain: f64,
    /// Optional sensing power multiplying the information; omitted means 1.
    #[serde(default)]
    pub sensing_power_watts: Option<f64>,
}

fn default_speed_of_light() -> f64 {
    299_792_458.0
}

impl Default for PhysicalSensing {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            m_r: 5.0,
            m_t: 5.0,
            sigma_s2_watts: 1e-12,
            speed_of_light_m_s: default_speed_of_light(),
            rcs_gain: 10.0,
            sensing_power_watts: None,
        }
    }
}

impl PhysicalSensing {
    /// `κ_s = 8π²·E[G_t]·M_r·B²·|ξ|² / (3c²σ_s²)` (times the optional power).
    pub fn kappa_s(&self) -> f64 {
        let gain = self.m_t - 1.0;
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let power = self.sensing_power_watts.unwrap_or(1.0);
        8.0 * pi2 * gain * self.m_r * self.bandwidth_hz.powi(2) * self.rcs_gain * power
            / (3.0 * self.speed_of_light_m_s.powi(2) * self.sigma_s2_watts)
    }
}

impl SensingParams {
    pub fn new(beta: f64, kappa_s: f64) -> Result<Self> {
        let p = Self { beta, kappa_s };
        p.validate()?;
        Ok(p)
    }

    pub fn from_physical(beta: f64, phys: &PhysicalSensing) -> Result<Self> {
        if phys.m_t < 2.0 {
            return Err(invalid("sensing needs M_t >= 2 for a positive expected gain"));
        }
        Self::new(beta, phys.kappa_s())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 2.0) {
            return Err(invalid("beta must be >= 2"));
        }
        if !(self.kappa_s.is_finite() && self.kappa_s > 0.0) {
            return Err(invalid("kappa_s must be positive"));
        }
        Ok(())
    }
}

/// Unit vector pointing from `t` towards `b`.
pub fn unit_vector(b: &Vec3, t: &Vec3) -> Result<Vec3> {
    let d = b - t;
    let n = d.norm();
    if n == 0.0 {
        return Err(Error::Coincident { bs: 0, x: t.x, y: t.y, z: t.z });
    }
    Ok(d / n)
}

/// Ranging-error variance of the bistatic link `tx → target → rx`, in m².
pub fn ranging_variance(d_tx: f64, d_rx: f64, params: &SensingParams) -> Result<f64> {
    if !(d_tx > 0.0 && d_rx > 0.0) {
        return Err(invalid("link distances must be positive"));
    }
    Ok((d_tx * d_rx).powf(params.beta) / params.kappa_s)
}

/// Per-BS unit vectors towards the BS and pathloss weights `d^{-β}`.
pub(crate) fn link_geometry(t: &Vec3, positions: &[Vec3], beta: f64) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let mut units = Vec::with_capacity(positions.len());
    let mut weights = Vec::with_capacity(positions.len());
    for (i, b) in positions.iter().enumerate() {
        let diff = b - t;
        let d = diff.norm();
        if d == 0.0 {
            return Err(Error::Coincident { bs: i, x: t.x, y: t.y, z: t.z });
        }
        units.push(diff / d);
        weights.push(d.powf(-beta));
    }
    Ok((units, weights))
}

pub(crate) fn fisher_from_positions(t: &Vec3, positions: &[Vec3], params: &SensingParams) -> Result<Matrix3<f64>> {
    let (units, weights) = link_geometry(t, positions, params.beta)?;
    // Σ_ij w_i w_j (v_i+v_j)(v_i+v_j)ᵀ = 2(Σw)(Σ w v vᵀ) + 2 s sᵀ, s = Σ w v
    let mut w_sum = 0.0;
    let mut s = Vec3::zeros();
    let mut outer = Matrix3::zeros();
    for (v, w) in units.iter().zip(&weights) {
        w_sum += w;
        s += *w * v;
        outer += *w * v * v.transpose();
    }
    let f = 2.0 * params.kappa_s * (w_sum * outer + s * s.transpose());
    Ok(0.5 * (f + f.transpose()))
}

/// Fisher information of the target position from all `N²` ordered
/// transmitter/receiver pairs.
pub fn fisher_matrix(t: &Vec3, dep: &Deployment, params: &SensingParams) -> Result<Matrix3<f64>> {
    fisher_from_positions(t, dep.positions(), params)
}

/// `trace(F⁻¹)`, or `+∞` when `F` is singular within [`SINGULAR_CONDITION`].
pub fn crlb_of_fisher(f: &Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(*f).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= max / SINGULAR_CONDITION {
        return f64::INFINITY;
    }
    match f.cholesky() {
        Some(ch) => ch.inverse().trace(),
        None => f64::INFINITY,
    }
}

pub(crate) fn crlb_from_positions(t: &Vec3, positions: &[Vec3], params: &SensingParams) -> Result<f64> {
    Ok(crlb_of_fisher(&fisher_from_positions(t, positions, params)?))
}

/// Point CRLB in m². A non-localizable point yields `+∞`.
pub fn crlb_point(t: &Vec3, dep: &Deployment, params: &SensingParams) -> Result<f64> {
    crlb_from_positions(t, dep.positions(), params)
}

pub(crate) fn area_crlb_positions(samples: &SampleSet, positions: &[Vec3], params: &SensingParams) -> Result<f64> {
    let mut acc = 0.0;
    for (t, w) in samples.iter() {
        if w == 0.0 {
            continue;
        }
        let c = crlb_from_positions(t, positions, params)?;
        if c.is_infinite() {
            return Ok(f64::INFINITY);
        }
        acc += w * c;
    }
    Ok(acc)
}

/// Weighted average of the point CRLB over the samples.
pub fn area_crlb(samples: &SampleSet, dep: &Deployment, params: &SensingParams) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    area_crlb_positions(samples, dep.positions(), params)
}

/// CRLB evaluated at every sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbField {
    pub samples: SampleSet,
    pub values: Vec<f64>,
}

impl CrlbField {
    /// CSV with header `x,y,z,crlb,log10_crlb`; infinities print as `inf`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z", "crlb", "log10_crlb"])?;
        for (p, v) in self.samples.points().iter().zip(&self.values) {
            w.write_record([
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                v.to_string(),
                v.log10().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Point CRLB over every sample, evaluated in parallel.
pub fn crlb_field(samples: &SampleSet, dep: &Deployment, params: &SensingParams) -> Result<CrlbField> {
    let values = samples
        .points()
        .par_iter()
        .map(|t| crlb_point(t, dep, params))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CrlbField { samples: samples.clone(), values })
}

/// Weight of the samples whose CRLB is at most `threshold`.
pub fn coverage_probability(field: &CrlbField, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(invalid("coverage threshold must be positive"));
    }
    let p: f64 = field
        .samples
        .weights()
        .iter()
        .zip(&field.values)
        .filter(|(_, v)| **v <= threshold)
        .fold(0.0, |acc, (w, _)| acc + w);
    Ok(p.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> SensingParams {
        SensingParams::new(2.0, 1.0).unwrap()
    }

    #[test]
    fn unit_vector_examples() {
        assert_eq!(unit_vector(&Vec3::x(), &Vec3::zeros()).unwrap(), Vec3::x());
        assert_relative_eq!(
            unit_vector(&Vec3::new(0.0, 3.0, 4.0), &Vec3::zeros()).unwrap(),
            Vec3::new(0.0, 0.6, 0.8),
            epsilon = 1e-15
        );
        assert!(unit_vector(&Vec3::x(), &Vec3::x()).is_err());
    }

    #[test]
    fn ranging_variance_examples() {
        let phys = PhysicalSensing {
            bandwidth_hz: 1.0,
            m_r: 1.0,
            m_t: 2.0,
            sigma_s2_watts: 8.0 * std::f64::consts::PI.powi(2) / 3.0,
            speed_of_light_m_s: 3.0,
            rcs_gain: 1.0,
            sensing_power_watts: None,
        };
        let p = SensingParams::from_physical(2.0, &phys).unwrap();
        assert_relative_eq!(ranging_variance(1.0, 1.0, &p).unwrap(), 9.0, max_relative = 1e-14);

        assert_relative_eq!(ranging_variance(10.0, 10.0, &unit()).unwrap(), 1e4, max_relative = 1e-15);
        let r1 = ranging_variance(30.0, 70.0, &unit()).unwrap();
        let r2 = ranging_variance(60.0, 140.0, &unit()).unwrap();
        assert_relative_eq!(r2 / r1, 16.0, max_relative = 1e-14);
        assert!(ranging_variance(0.0, 1.0, &unit()).is_err());
    }

    #[test]
    fn single_bs_is_singular() {
        let dep = Deployment::new(vec![Vec3::new(3.0, 4.0, 0.0)]).unwrap();
        let f = fisher_matrix(&Vec3::zeros(), &dep, &unit()).unwrap();
        let v = Vec3::new(0.6, 0.8, 0.0);
        assert_relative_eq!(f, 4.0 * v * v.transpose() / 625.0, epsilon = 1e-15);
        assert_eq!(crlb_point(&Vec3::zeros(), &dep, &unit()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn coplanar_bs_are_singular() {
        let dep = Deployment::new(vec![
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
            Vec3::new(-7.0, -3.0, 0.0),
            Vec3::new(4.0, -9.0, 0.0),
        ])
        .unwrap();
        let f = fisher_matrix(&Vec3::zeros(), &dep, &unit()).unwrap();
        assert!(f[(2, 2)].abs() < 1e-18);
        assert!(crlb_point(&Vec3::zeros(), &dep, &unit()).unwrap().is_infinite());
    }

    #[test]
    fn coincident_target_errors() {
        let dep = Deployment::new(vec![Vec3::x(), Vec3::y()]).unwrap();
        assert!(matches!(crlb_point(&Vec3::y(), &dep, &unit()), Err(Error::Coincident { bs: 1, .. })));
    }

    #[test]
    fn area_and_coverage() {
        let dep = Deployment::new(vec![Vec3::new(0.0, 0.0, 1.0)]).unwrap();
        let s = SampleSet::uniform(vec![Vec3::zeros()]).unwrap();
        assert!(area_crlb(&s, &dep, &unit()).unwrap().is_infinite());

        let field = CrlbField {
            samples: SampleSet::uniform(vec![Vec3::zeros(), Vec3::x()]).unwrap(),
            values: vec![0.5, 2.0],
        };
        assert_eq!(coverage_probability(&field, 1.0).unwrap(), 0.5);
        assert_eq!(coverage_probability(&field, 3.0).unwrap(), 1.0);
        assert!(coverage_probability(&field, 0.0).is_err());

        let zero_weight = CrlbField {
            samples: SampleSet::weighted(vec![Vec3::zeros(), Vec3::x()], vec![1.0, 0.0]).unwrap(),
            values: vec![0.5, f64::INFINITY],
        };
        assert_eq!(coverage_probability(&zero_weight, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn csv_marks_infinity() {
        let field = CrlbField {
            samples: SampleSet::uniform(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()]).unwrap(),
            values: vec![100.0, f64::INFINITY],
        };
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x,y,z,crlb,log10_crlb\n1,2,3,100,2\n0,0,0,inf,inf\n");
    }

    #[test]
    fn physical_defaults_give_positive_kappa() {
        let p = SensingParams::from_physical(2.0, &PhysicalSensing::default()).unwrap();
        let c = 299_792_458.0_f64;
        let expected = 8.0 * std::f64::consts::PI.powi(2) * 4.0 * 5.0 * 1e14 * 10.0 / (3.0 * c * c * 1e-12);
        assert!((p.kappa_s / expected - 1.0).abs() < 1e-14);
        assert!(p.kappa_s > 5.8e12 && p.kappa_s < 5.9e12);
    }
}
