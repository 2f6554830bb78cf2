//! Non-coherent cooperative (CoMP) downlink rate.
//!
//! The optimizer works with the expected-gain surrogate
//! `log2(1 + Σ_n E[g_n]·d_n^{-α}/σ²)`, `E[g_n] = (M_t − 1)·p_c`. The Monte
//! Carlo estimator draws `g_n ~ Gamma(M_t − 1, p_c)` and is only used for
//! validation and reporting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Deployment, SampleSet, Vec3};

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommParams {
    pub alpha: f64,
    pub m_t: u32,
    #[serde(rename = "p_c_watts")]
    pub p_c: f64,
    #[serde(rename = "sigma_c2_watts")]
    pub sigma_c2: f64,
    /// Area-rate floor in bit/s/Hz.
    #[serde(rename = "r_th_bps_hz")]
    pub r_th: f64,
}

impl Default for CommParams {
    fn default() -> Self {
        Self { alpha: 4.0, m_t: 5, p_c: 0.01, sigma_c2: 1e-12, r_th: 0.0 }
    }
}

impl CommParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 2.0) {
            return Err(invalid("alpha must be >= 2"));
        }
        if self.m_t < 2 {
            return Err(invalid("M_t must be >= 2"));
        }
        if !(self.p_c > 0.0 && self.p_c.is_finite()) || !(self.sigma_c2 > 0.0 && self.sigma_c2.is_finite()) {
            return Err(invalid("p_c and sigma_c2 must be positive"));
        }
        if !self.r_th.is_finite() || self.r_th < 0.0 {
            return Err(invalid("rate threshold must be nonnegative"));
        }
        Ok(())
    }

    /// `E[g_n] = (M_t − 1)·p_c`.
    pub fn expected_gain(&self) -> f64 {
        (self.m_t - 1) as f64 * self.p_c
    }
}

fn path_gains(u: &Vec3, positions: &[Vec3], alpha: f64) -> Result<Vec<f64>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let d = (b - u).norm();
            if d == 0.0 {
                Err(Error::Coincident { bs: i, x: u.x, y: u.y, z: u.z })
            } else {
                Ok(d.powf(-alpha))
            }
        })
        .collect()
}

pub(crate) fn snr_positions(u: &Vec3, positions: &[Vec3], params: &CommParams) -> Result<f64> {
    let sum: f64 = path_gains(u, positions, params.alpha)?.iter().sum();
    Ok(params.expected_gain() * sum / params.sigma_c2)
}

/// SNR with every fading gain replaced by its mean.
pub fn expected_snr(u: &Vec3, dep: &Deployment, params: &CommParams) -> Result<f64> {
    snr_positions(u, dep.positions(), params)
}

/// Expected-gain surrogate rate in bit/s/Hz.
pub fn rate_point(u: &Vec3, dep: &Deployment, params: &CommParams) -> Result<f64> {
    Ok(expected_snr(u, dep, params)?.ln_1p() / std::f64::consts::LN_2)
}

/// Monte Carlo estimate of the ergodic rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Half-width of the 95% normal confidence interval.
    pub ci95: f64,
    pub std_err: f64,
}

/// Ergodic rate `E[log2(1 + SNR)]` with i.i.d. Gamma gains.
///
/// Draws are split into fixed chunks, each with its own ChaCha stream, so
/// the result is identical whatever the thread count.
pub fn rate_point_mc(u: &Vec3, dep: &Deployment, params: &CommParams, n_draws: usize, seed: u64) -> Result<McEstimate> {
    if n_draws == 0 {
        return Err(invalid("n_draws must be >= 1"));
    }
    params.validate()?;
    let path = path_gains(u, dep.positions(), params.alpha)?;
    let gamma = Gamma::new((params.m_t - 1) as f64, params.p_c).map_err(|e| invalid(e.to_string()))?;
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(n_draws - c * MC_CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let snr: f64 = path.iter().map(|l| gamma.sample(&mut rng) * l).sum::<f64>() / params.sigma_c2;
                let r = snr.ln_1p() / std::f64::consts::LN_2;
                s += r;
                s2 += r * r;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_draws as f64;
    let mean = s / n;
    let var = if n_draws > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let std_err = (var / n).sqrt();
    Ok(McEstimate { mean, ci95: 1.96 * std_err, std_err })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    Surrogate,
    MonteCarlo { n_draws: usize, seed: u64 },
}

pub(crate) fn area_rate_positions(users: &SampleSet, positions: &[Vec3], params: &CommParams) -> Result<f64> {
    let mut acc = 0.0;
    for (u, w) in users.iter() {
        acc += w * snr_positions(u, positions, params)?.ln_1p();
    }
    Ok(acc / std::f64::consts::LN_2)
}

/// Weighted average rate over the user samples.
pub fn area_rate(users: &SampleSet, dep: &Deployment, params: &CommParams, mode: RateMode) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::EmptySamples);
    }
    match mode {
        RateMode::Surrogate => area_rate_positions(users, dep.positions(), params),
        RateMode::MonteCarlo { n_draws, seed } => {
            let mut acc = 0.0;
            for (j, (u, w)) in users.iter().enumerate() {
                let est = rate_point_mc(u, dep, params, n_draws, seed.wrapping_add(j as u64))?;
                acc += w * est.mean;
            }
            Ok(acc)
        }
    }
}
