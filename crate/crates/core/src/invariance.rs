//! Randomized checks that the A-CRLB transforms as predicted under
//! displacement, rotation, reflection and uniform scaling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Deployment, SampleSet, SimilarityTransform, Vec3};
use crate::sensing::{area_crlb, SensingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Displacement,
    Rotation,
    Reflection,
    Scaling,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] =
        [TransformKind::Displacement, TransformKind::Rotation, TransformKind::Reflection, TransformKind::Scaling];
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceCheck {
    pub kind: TransformKind,
    pub trials: usize,
    pub max_rel_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub checks: Vec<InvarianceCheck>,
    pub pass: bool,
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random transform of the given kind; `extent` sets the displacement range.
pub fn random_transform(kind: TransformKind, extent: f64, rng: &mut impl Rng) -> Result<SimilarityTransform> {
    match kind {
        TransformKind::Displacement => {
            Ok(SimilarityTransform::translation(Vec3::from_fn(|_, _| rng.random_range(-extent..extent))))
        }
        TransformKind::Rotation => SimilarityTransform::rotation(unit_vector(rng), rng.random_range(-PI..PI)),
        TransformKind::Reflection => SimilarityTransform::reflection(unit_vector(rng)),
        TransformKind::Scaling => SimilarityTransform::scaling(rng.random_range(0.1..10.0)),
    }
}

/// A-CRLB ratio predicted for `t`: `κ^{2β}`.
pub fn predicted_ratio(t: &SimilarityTransform, params: &SensingParams) -> f64 {
    t.scale().powf(2.0 * params.beta)
}

/// Relative deviation of the transformed A-CRLB from its prediction.
pub fn deviation(
    samples: &SampleSet,
    dep: &Deployment,
    t: &SimilarityTransform,
    params: &SensingParams,
) -> Result<f64> {
    let base = area_crlb(samples, dep, params)?;
    let moved = area_crlb(&t.apply_samples(samples), &t.apply_deployment(dep), params)?;
    let expected = predicted_ratio(t, params) * base;
    Ok(((moved - expected) / expected).abs())
}

/// Run `trials` random transforms of each kind on `(samples, dep)`.
pub fn invariance_suite(
    samples: &SampleSet,
    dep: &Deployment,
    params: &SensingParams,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    let extent = samples
        .points()
        .iter()
        .chain(dep.positions())
        .map(|p| p.amax())
        .fold(1.0, f64::max)
        * 10.0;
    let mut checks = Vec::new();
    for (i, kind) in TransformKind::ALL.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let t = random_transform(*kind, extent, &mut rng)?;
            let d = deviation(samples, dep, &t, params)?;
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
        checks.push(InvarianceCheck { kind: *kind, trials, max_rel_deviation: worst, tolerance, pass: worst < tolerance });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(InvarianceReport { checks, pass })
}
